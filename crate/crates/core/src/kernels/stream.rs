//! Element-wise kernels: `vecadd` (z = x + y) and `saxpy` (z = a*x + y).

use super::builder::{freg, Kb, COMP, MEM};
use super::{bits, value, values, Bench, BuiltKernel, KernelError, Problem, Variant};
use crate::config::CoreConfig;
use crate::csr::StreamMode;
use rand_chacha::ChaCha8Rng;

pub struct Stream {
    bench: Bench,
    pub a: f32,
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

impl Stream {
    pub fn vecadd(n: usize, rng: &mut ChaCha8Rng) -> Self {
        Stream { bench: Bench::Vecadd, a: 1.0, x: values(rng, n), y: values(rng, n) }
    }

    pub fn saxpy(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = value(rng) * 4.0;
        Stream { bench: Bench::Saxpy, a, x: values(rng, n), y: values(rng, n) }
    }

    fn compute(&self, dst: &str) -> String {
        match self.bench {
            Bench::Vecadd => format!("fadd.s {dst}, ft0, ft1"),
            _ => format!("fmadd.s {dst}, fa0, ft0, ft1"),
        }
    }
}

impl Problem for Stream {
    fn bench(&self) -> Bench {
        self.bench
    }

    fn items(&self) -> usize {
        self.x.len()
    }

    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError> {
        let n = self.items();
        let mut k = Kb::new(cfg, v, n);
        k.require_levels(0)?;
        let xa = k.heap.floats(&self.x);
        let ya = k.heap.floats(&self.y);
        let za = k.output("z", n);
        let stride = (k.h() * 4) as i32;
        k.prologue();
        k.item_ptr("a0", xa, 4);
        k.item_ptr("a1", ya, 4);
        k.item_ptr("a2", za, 4);
        if self.bench == Bench::Saxpy {
            k.lif("fa0", self.a);
        }
        if v.dmsl() {
            k.lane_count("a5", 1);
            k.stream(0, freg("ft0"), StreamMode::Read, "a0", stride, "a5");
            k.stream(1, freg("ft1"), StreamMode::Read, "a1", stride, "a5");
            k.stream(2, freg("ft2"), StreamMode::Write, "a2", stride, "a5");
            k.begin_loop();
            k.loop_end_label();
            k.ins(COMP, self.compute("ft2"));
            k.finish_streaming();
        } else {
            k.begin_loop();
            k.ins(MEM, "flw ft0, 0(a0)");
            k.ins(MEM, "flw ft1, 0(a1)");
            k.ins(COMP, self.compute("ft2"));
            k.ins(MEM, "fsw ft2, 0(a2)");
            k.update(MEM, "add a0, a0, s8");
            k.update(MEM, "add a1, a1, s8");
            k.update(MEM, "add a2, a2, s8");
            k.end_loop(false);
        }
        k.build()
    }

    fn golden(&self) -> Vec<Vec<u32>> {
        let z: Vec<f32> = match self.bench {
            Bench::Vecadd => self.x.iter().zip(&self.y).map(|(x, y)| x + y).collect(),
            _ => self.x.iter().zip(&self.y).map(|(x, y)| self.a.mul_add(*x, *y)).collect(),
        };
        vec![bits(&z)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn saxpy_with_zero_scale_copies_y() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = Stream::saxpy(40, &mut rng);
        s.a = 0.0;
        assert_eq!(s.golden()[0], bits(&s.y));
    }
}
