//! `sgemv`: y = A x with A of shape M x K, one row per work item.

use super::builder::{freg, Kb, COMP, LOOP, MEM, OTHER};
use super::{bits, values, Bench, BuiltKernel, KernelError, Problem, Variant};
use crate::config::CoreConfig;
use crate::csr::StreamMode;
use rand_chacha::ChaCha8Rng;

pub const K: usize = 8;

pub struct Sgemv {
    /// Row-major M x K.
    pub a: Vec<f32>,
    pub x: Vec<f32>,
}

impl Sgemv {
    pub fn new(m: usize, rng: &mut ChaCha8Rng) -> Self {
        Sgemv { a: values(rng, m * K), x: values(rng, K) }
    }
}

/// Emits the dot-product kernel shared by `sgemv` and `sgemm`. `a0` walks the
/// per-item output; the caller's `setup` leaves `a3`/`a4` at the first
/// operand pair of the item and `a5`/`a6` holding their element strides.
pub(crate) fn dot_body(k: &mut Kb, inner_label: &str, setup: &dyn Fn(&mut Kb)) {
    setup(k);
    k.ins(OTHER, "fmv.w.x ft3, zero");
    if !k.v.cfm() {
        k.ins(LOOP, "li t1, 0");
    }
    k.label(inner_label);
    k.ins(MEM, "flw ft0, 0(a3)");
    k.ins(MEM, "flw ft1, 0(a4)");
    k.ins(COMP, "fmadd.s ft3, ft0, ft1, ft3");
    k.ins(MEM, "add a3, a3, a5");
    if k.v.cfm() {
        k.label(&format!("{inner_label}_end"));
        k.ins(MEM, "add a4, a4, a6");
    } else {
        k.ins(MEM, "add a4, a4, a6");
        k.ins(LOOP, "addi t1, t1, 1");
        k.ins(LOOP, format!("blt t1, a7, {inner_label}"));
    }
    k.ins(MEM, "fsw ft3, 0(a0)");
}

/// Streaming dot product: `ft0` and `ft1` are read streams, `ft2` the
/// output stream. `len` must be at least 3.
pub(crate) fn dot_streaming(k: &mut Kb, len: usize) {
    k.hw_loop("inner", "inner", len as u32 - 2);
    k.begin_loop();
    k.ins(COMP, "fmul.s ft3, ft0, ft1");
    k.label("inner");
    k.ins(COMP, "fmadd.s ft3, ft0, ft1, ft3");
    k.loop_end_label();
    k.ins(COMP, "fmadd.s ft2, ft0, ft1, ft3");
    k.finish_streaming();
}

/// Configures the three streams of a streaming dot product.
pub(crate) fn dot_streams(k: &mut Kb, a_packed: u32, b_base: u32, b_uniform: bool, out: u32, len: usize) {
    let hs = (k.h() * 4) as i32;
    k.lane_count("t3", 1);
    if len.is_power_of_two() {
        k.ins(OTHER, format!("slli t4, t3, {}", len.trailing_zeros()));
    } else {
        k.li("t4", len as u32);
        k.ins(OTHER, "mul t4, t3, t4");
    }
    k.item_ptr("a1", a_packed, 4);
    k.stream(0, freg("ft0"), StreamMode::Read, "a1", hs, "t4");
    if b_uniform {
        k.li("a2", b_base);
        k.stream(1, freg("ft1"), StreamMode::Read, "a2", 4, "t4");
    } else {
        k.item_ptr("a2", b_base, 4);
        k.stream(1, freg("ft1"), StreamMode::Read, "a2", hs, "t4");
    }
    k.item_ptr("a0", out, 4);
    k.stream(2, freg("ft2"), StreamMode::Write, "a0", hs, "t3");
}

/// Lays out `f(item, j)` for `j < len` as `[iteration][j][lane]`, the order
/// a linear per-thread stream of stride `H*4` walks.
pub(crate) fn pack(k: &Kb, len: usize, f: impl Fn(usize, usize) -> f32) -> Vec<f32> {
    let h = k.h();
    let iters = k.fold.max_iters();
    let mut out = vec![0.0f32; iters * len * h];
    for it in 0..iters {
        for g in 0..h {
            let e = it * h + g;
            if e >= k.fold.n {
                continue;
            }
            for j in 0..len {
                out[(it * len + j) * h + g] = f(e, j);
            }
        }
    }
    out
}

/// Repeats `vals` once per work-loop iteration for a uniform stream.
pub(crate) fn replicate(k: &Kb, vals: &[f32]) -> Vec<f32> {
    vals.repeat(k.fold.max_iters())
}

impl Problem for Sgemv {
    fn bench(&self) -> Bench {
        Bench::Sgemv
    }

    fn items(&self) -> usize {
        self.a.len() / K
    }

    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError> {
        let m = self.items();
        let mut k = Kb::new(cfg, v, m);
        k.require_levels(1)?;
        if v.dmsl() {
            let ap = pack(&k, K, |e, j| self.a[e * K + j]);
            let ap = k.heap.floats(&ap);
            let xr = replicate(&k, &self.x);
            let xr = k.heap.floats(&xr);
            let y = k.output("y", m);
            k.prologue();
            dot_streams(&mut k, ap, xr, true, y, K);
            dot_streaming(&mut k, K);
            return k.build();
        }
        let a = k.heap.floats(&self.a);
        let x = k.heap.floats(&self.x);
        let y = k.output("y", m);
        k.prologue();
        k.item_ptr("a1", a, (K * 4) as u32);
        k.item_ptr("a0", y, 4);
        k.li("a2", x);
        k.li("a5", 4);
        k.li("a6", 4);
        k.li("a7", K as u32);
        k.li("ra", (k.h() * K * 4) as u32);
        if v.cfm() {
            k.hw_loop("inner", "inner_end", K as u32);
        }
        k.begin_loop();
        dot_body(&mut k, "inner", &|k| {
            k.ins(MEM, "mv a3, a1");
            k.ins(MEM, "mv a4, a2");
        });
        k.update(MEM, "add a1, a1, ra");
        k.update(MEM, "add a0, a0, s8");
        k.end_loop(false);
        k.build()
    }

    fn golden(&self) -> Vec<Vec<u32>> {
        let y: Vec<f32> = self
            .a
            .chunks(K)
            .map(|row| row.iter().zip(&self.x).fold(0.0f32, |acc, (a, x)| a.mul_add(*x, acc)))
            .collect();
        vec![bits(&y)]
    }
}
