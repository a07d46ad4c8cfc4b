//! `knn`: for every query point, the squared distance to its nearest
//! reference point (top-k selection with k = 1).

use super::builder::{freg, Kb, COMP, LOOP, MEM, OTHER};
use super::sgemv::{pack, replicate};
use super::{bits, values, Bench, BuiltKernel, KernelError, Problem, Variant};
use crate::config::CoreConfig;
use crate::csr::StreamMode;
use rand_chacha::ChaCha8Rng;

/// Reference points scanned per query.
pub const REFS: usize = 8;

pub struct Knn {
    /// Interleaved (x, y) per query.
    pub queries: Vec<f32>,
    /// Interleaved (x, y) per reference point.
    pub refs: Vec<f32>,
}

impl Knn {
    pub fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        Knn { queries: values(rng, 2 * n), refs: values(rng, 2 * REFS) }
    }

    fn distance_ops(k: &mut Kb) {
        k.ins(COMP, "fsub.s ft1, ft4, fs0");
        k.ins(COMP, "fsub.s ft2, ft5, fs1");
        k.ins(COMP, "fmul.s ft3, ft1, ft1");
        k.ins(COMP, "fmadd.s ft3, ft2, ft2, ft3");
    }
}

impl Problem for Knn {
    fn bench(&self) -> Bench {
        Bench::Knn
    }

    fn items(&self) -> usize {
        self.queries.len() / 2
    }

    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError> {
        let n = self.items();
        let mut k = Kb::new(cfg, v, n);
        k.require_levels(1)?;
        let hs = (k.h() * 4) as i32;
        if v.dmsl() {
            let qp = pack(&k, 2, |e, j| self.queries[2 * e + j]);
            let qp = k.heap.floats(&qp);
            let rr = replicate(&k, &self.refs);
            let rr = k.heap.floats(&rr);
            let out = k.output("dist", n);
            k.prologue();
            k.lif("fs3", f32::INFINITY);
            k.lane_count("t3", 1);
            k.ins(OTHER, "slli t4, t3, 1");
            k.item_ptr("a1", qp, 4);
            k.stream(0, freg("ft0"), StreamMode::Read, "a1", hs, "t4");
            k.li("t4", (2 * REFS) as u32);
            k.ins(OTHER, "mul t4, t3, t4");
            k.li("a2", rr);
            // x and y of each reference arrive through the same register
            k.stream(1, freg("ft4"), StreamMode::Read, "a2", 4, "t4");
            k.item_ptr("a0", out, 4);
            k.stream(2, freg("fa1"), StreamMode::Write, "a0", hs, "t3");
            k.hw_loop("inner", "inner_end", REFS as u32);
            k.begin_loop();
            k.ins(OTHER, "fmv.s fs0, ft0");
            k.ins(OTHER, "fmv.s fs1, ft0");
            k.ins(OTHER, "fmv.s fs2, fs3");
            k.label("inner");
            k.ins(COMP, "fsub.s ft1, ft4, fs0");
            k.ins(COMP, "fsub.s ft2, ft4, fs1");
            k.ins(COMP, "fmul.s ft3, ft1, ft1");
            k.ins(COMP, "fmadd.s ft3, ft2, ft2, ft3");
            k.label("inner_end");
            k.ins(COMP, "fmin.s fs2, fs2, ft3");
            k.loop_end_label();
            k.ins(OTHER, "fmv.s fa1, fs2");
            k.finish_streaming();
            return k.build();
        }
        let q = k.heap.floats(&self.queries);
        let r = k.heap.floats(&self.refs);
        let out = k.output("dist", n);
        k.prologue();
        k.lif("fs3", f32::INFINITY);
        k.item_ptr("a0", q, 8);
        k.item_ptr("a2", out, 4);
        k.li("a6", r);
        k.li("a7", REFS as u32);
        k.li("a5", (k.h() * 8) as u32);
        if v.cfm() {
            k.hw_loop("inner", "inner_end", REFS as u32);
        }
        k.begin_loop();
        k.ins(MEM, "flw fs0, 0(a0)");
        k.ins(MEM, "flw fs1, 4(a0)");
        k.ins(OTHER, "fmv.s fs2, fs3");
        k.ins(MEM, "mv a3, a6");
        if !v.cfm() {
            k.ins(LOOP, "li t1, 0");
        }
        k.label("inner");
        k.ins(MEM, "flw ft4, 0(a3)");
        k.ins(MEM, "flw ft5, 4(a3)");
        Self::distance_ops(&mut k);
        k.ins(COMP, "fmin.s fs2, fs2, ft3");
        if v.cfm() {
            k.label("inner_end");
            k.ins(MEM, "addi a3, a3, 8");
        } else {
            k.ins(MEM, "addi a3, a3, 8");
            k.ins(LOOP, "addi t1, t1, 1");
            k.ins(LOOP, "blt t1, a7, inner");
        }
        k.ins(MEM, "fsw fs2, 0(a2)");
        k.update(MEM, "add a0, a0, a5");
        k.update(MEM, "add a2, a2, s8");
        k.end_loop(false);
        k.build()
    }

    fn golden(&self) -> Vec<Vec<u32>> {
        let d: Vec<f32> = self
            .queries
            .chunks(2)
            .map(|q| {
                self.refs.chunks(2).fold(f32::INFINITY, |best, r| {
                    let dx = r[0] - q[0];
                    let dy = r[1] - q[1];
                    best.min(dy.mul_add(dy, dx * dx))
                })
            })
            .collect();
        vec![bits(&d)]
    }
}
