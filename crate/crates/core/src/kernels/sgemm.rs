//! `sgemm`: C = A B with A of shape R x Z and B of shape Z x COLS; one output
//! element per work item.

use super::builder::{Kb, MEM, OTHER};
use super::sgemv::{dot_body, dot_streaming, dot_streams, pack};
use super::{bits, values, Bench, BuiltKernel, KernelError, Problem, Variant};
use crate::config::CoreConfig;
use rand_chacha::ChaCha8Rng;

pub const Z: usize = 8;
pub const COLS: usize = 16;

pub struct Sgemm {
    pub rows: usize,
    pub a: Vec<f32>,
    pub b: Vec<f32>,
}

impl Sgemm {
    pub fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let rows = n.div_ceil(COLS);
        Sgemm { rows, a: values(rng, rows * Z), b: values(rng, Z * COLS) }
    }
}

impl Problem for Sgemm {
    fn bench(&self) -> Bench {
        Bench::Sgemm
    }

    fn items(&self) -> usize {
        self.rows * COLS
    }

    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError> {
        let n = self.items();
        let mut k = Kb::new(cfg, v, n);
        k.require_levels(1)?;
        if v.dmsl() {
            let ap = pack(&k, Z, |e, j| self.a[(e / COLS) * Z + j]);
            let ap = k.heap.floats(&ap);
            let bp = pack(&k, Z, |e, j| self.b[j * COLS + e % COLS]);
            let bp = k.heap.floats(&bp);
            let c = k.output("c", n);
            k.prologue();
            dot_streams(&mut k, ap, bp, false, c, Z);
            dot_streaming(&mut k, Z);
            return k.build();
        }
        let a = k.heap.floats(&self.a);
        let b = k.heap.floats(&self.b);
        let c = k.output("c", n);
        k.prologue();
        k.item_ptr("a0", c, 4);
        k.li("a1", a);
        k.li("a2", b);
        k.li("a5", 4);
        k.li("a6", (COLS * 4) as u32);
        k.li("a7", Z as u32);
        if v.cfm() {
            k.hw_loop("inner", "inner_end", Z as u32);
        }
        k.begin_loop();
        dot_body(&mut k, "inner", &|k| {
            k.ins(OTHER, format!("srli t3, s2, {}", COLS.trailing_zeros()));
            k.ins(OTHER, format!("andi t4, s2, {}", COLS - 1));
            k.ins(OTHER, format!("slli t3, t3, {}", (Z * 4).trailing_zeros()));
            k.ins(MEM, "add a3, a1, t3");
            k.ins(OTHER, "slli t4, t4, 2");
            k.ins(MEM, "add a4, a2, t4");
        });
        k.update(MEM, "add a0, a0, s8");
        k.end_loop(true);
        k.build()
    }

    fn golden(&self) -> Vec<Vec<u32>> {
        let mut c = vec![0.0f32; self.items()];
        for i in 0..self.rows {
            for j in 0..COLS {
                let mut acc = 0.0f32;
                for z in 0..Z {
                    acc = self.a[i * Z + z].mul_add(self.b[z * COLS + j], acc);
                }
                c[i * COLS + j] = acc;
            }
        }
        vec![bits(&c)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identity_operand_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // 16 x 8 A times an 8 x 16 B whose left block is the identity
        let mut m = Sgemm::new(16 * COLS, &mut rng);
        m.b = vec![0.0; Z * COLS];
        for z in 0..Z {
            m.b[z * COLS + z] = 1.0;
        }
        let c = m.golden().remove(0);
        for i in 0..m.rows {
            for j in 0..Z {
                assert_eq!(c[i * COLS + j], m.a[i * Z + j].to_bits());
            }
        }
    }
}
