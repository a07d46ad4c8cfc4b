//! `conv2d`: valid 3x3 convolution, C = 8 input and K = 8 output channels.
//! Input is CHW, weights are [K][C][3][3] and the output is [y][x][K]; one
//! output value per work item.

use super::builder::{Kb, COMP, LOOP, MEM, OTHER};
use super::sgemv::{dot_streaming, dot_streams, pack};
use super::{bits, values, Bench, BuiltKernel, KernelError, Problem, Variant};
use crate::config::CoreConfig;
use rand_chacha::ChaCha8Rng;

pub const C: usize = 8;
pub const K: usize = 8;
pub const F: usize = 3;
pub const WIDTH: usize = 16;
const IN_W: usize = WIDTH + F - 1;
const WINDOW: usize = C * F * F;

pub struct Conv2d {
    pub rows: usize,
    pub input: Vec<f32>,
    pub weights: Vec<f32>,
}

impl Conv2d {
    pub fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let rows = n.div_ceil(WIDTH * K);
        let input = values(rng, C * (rows + F - 1) * IN_W);
        let weights = values(rng, K * WINDOW);
        Conv2d { rows, input, weights }
    }

    fn in_rows(&self) -> usize {
        self.rows + F - 1
    }

    /// Window element `j` (ordered c, fy, fx) of item `e`.
    fn window(&self, e: usize, j: usize) -> f32 {
        let pix = e / K;
        let (y, x) = (pix / WIDTH, pix % WIDTH);
        let (c, fy, fx) = (j / (F * F), j / F % F, j % F);
        self.input[(c * self.in_rows() + y + fy) * IN_W + x + fx]
    }
}

/// Direct convolution. `input` is `[c][rows + f - 1][width + f - 1]`,
/// `weights` is `[k][c][f][f]`, the result is `[rows][width][k]`.
pub fn direct_conv(input: &[f32], weights: &[f32], c: usize, k: usize, f: usize, rows: usize, width: usize) -> Vec<f32> {
    let (ih, iw) = (rows + f - 1, width + f - 1);
    let mut out = Vec::with_capacity(rows * width * k);
    for y in 0..rows {
        for x in 0..width {
            for ko in 0..k {
                let mut acc = 0.0f32;
                for ci in 0..c {
                    for fy in 0..f {
                        for fx in 0..f {
                            let v = input[(ci * ih + y + fy) * iw + x + fx];
                            let w = weights[((ko * c + ci) * f + fy) * f + fx];
                            acc = v.mul_add(w, acc);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

impl Problem for Conv2d {
    fn bench(&self) -> Bench {
        Bench::Conv2d
    }

    fn items(&self) -> usize {
        self.rows * WIDTH * K
    }

    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError> {
        let n = self.items();
        let mut k = Kb::new(cfg, v, n);
        if v.dmsl() {
            k.require_levels(1)?;
            let pp = pack(&k, WINDOW, |e, j| self.window(e, j));
            let pp = k.heap.floats(&pp);
            let wp = pack(&k, WINDOW, |e, j| self.weights[(e % K) * WINDOW + j]);
            let wp = k.heap.floats(&wp);
            let out = k.output("out", n);
            k.prologue();
            dot_streams(&mut k, pp, wp, false, out, WINDOW);
            dot_streaming(&mut k, WINDOW);
            return k.build();
        }
        k.require_levels(3)?;
        let input = k.heap.floats(&self.input);
        let weights = k.heap.floats(&self.weights);
        let out = k.output("out", n);
        k.prologue();
        k.item_ptr("a0", out, 4);
        k.li("a6", input);
        k.li("a7", weights);
        k.li("a5", IN_W as u32);
        k.li("a1", (WINDOW * 4) as u32);
        k.li("ra", F as u32);
        k.li("tp", C as u32);
        k.li("gp", ((self.in_rows() - F) * IN_W * 4) as u32);
        if v.cfm() {
            k.hw_loop("win", "c_end", C as u32);
            k.hw_loop("win", "fy_end", F as u32);
            k.hw_loop("win", "fx_end", F as u32);
        }
        k.begin_loop();
        k.ins(OTHER, format!("andi t4, s2, {}", K - 1));
        k.ins(OTHER, format!("srli t2, s2, {}", K.trailing_zeros()));
        k.ins(OTHER, format!("srli t3, t2, {}", WIDTH.trailing_zeros()));
        k.ins(OTHER, format!("andi t2, t2, {}", WIDTH - 1));
        k.ins(OTHER, "mul t3, t3, a5");
        k.ins(OTHER, "add t3, t3, t2");
        k.ins(OTHER, "slli t3, t3, 2");
        k.ins(MEM, "add a3, a6, t3");
        k.ins(OTHER, "mul t4, t4, a1");
        k.ins(MEM, "add a4, a7, t4");
        k.ins(OTHER, "fmv.w.x ft3, zero");
        let row_adj = ((IN_W - F) * 4) as i32;
        if v.cfm() {
            k.label("win");
            k.ins(MEM, "flw ft0, 0(a3)");
            k.ins(MEM, "flw ft1, 0(a4)");
            k.ins(COMP, "fmadd.s ft3, ft0, ft1, ft3");
            k.ins(MEM, "addi a3, a3, 4");
            k.label("fx_end");
            k.ins(MEM, "addi a4, a4, 4");
            k.label("fy_end");
            k.ins(MEM, format!("addi a3, a3, {row_adj}"));
            k.label("c_end");
            k.ins(MEM, "add a3, a3, gp");
        } else {
            k.ins(LOOP, "li t5, 0");
            k.label("c_top");
            k.ins(LOOP, "li t6, 0");
            k.label("fy_top");
            k.ins(LOOP, "li t1, 0");
            k.label("win");
            k.ins(MEM, "flw ft0, 0(a3)");
            k.ins(MEM, "flw ft1, 0(a4)");
            k.ins(COMP, "fmadd.s ft3, ft0, ft1, ft3");
            k.ins(MEM, "addi a3, a3, 4");
            k.ins(MEM, "addi a4, a4, 4");
            k.ins(LOOP, "addi t1, t1, 1");
            k.ins(LOOP, "blt t1, ra, win");
            k.ins(MEM, format!("addi a3, a3, {row_adj}"));
            k.ins(LOOP, "addi t6, t6, 1");
            k.ins(LOOP, "blt t6, ra, fy_top");
            k.ins(MEM, "add a3, a3, gp");
            k.ins(LOOP, "addi t5, t5, 1");
            k.ins(LOOP, "blt t5, tp, c_top");
        }
        k.ins(MEM, "fsw ft3, 0(a0)");
        k.update(MEM, "add a0, a0, s8");
        k.end_loop(true);
        k.build()
    }

    fn golden(&self) -> Vec<Vec<u32>> {
        vec![bits(&direct_conv(&self.input, &self.weights, C, K, F, self.rows, WIDTH))]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_pointwise_filter_is_identity() {
        let input: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 2.0).collect();
        assert_eq!(direct_conv(&input, &[1.0], 1, 1, 1, 3, 4), input);
    }

    #[test]
    fn window_matches_direct_indexing() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Conv2d::new(2 * WIDTH * K, &mut rng);
        let golden = direct_conv(&c.input, &c.weights, C, K, F, c.rows, WIDTH);
        for e in [0, 7, 8, 130, c.items() - 1] {
            let acc = (0..WINDOW).fold(0.0f32, |acc, j| c.window(e, j).mul_add(c.weights[(e % K) * WINDOW + j], acc));
            assert_eq!(acc, golden[e]);
        }
    }
}
