//! `sfilter`: 3x3 stencil over a single-channel image, one output pixel per
//! work item. The filter taps live in registers for the whole kernel.

use super::builder::{freg, Kb, COMP, MEM, OTHER};
use super::sgemv::pack;
use super::{bits, values, Bench, BuiltKernel, KernelError, Problem, Variant};
use crate::config::CoreConfig;
use crate::csr::StreamMode;
use rand_chacha::ChaCha8Rng;

pub const WIDTH: usize = 16;
const IN_W: usize = WIDTH + 2;
const TAPS: [&str; 9] = ["fs0", "fs1", "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8"];

pub struct Sfilter {
    pub rows: usize,
    /// (rows + 2) x (WIDTH + 2) input.
    pub image: Vec<f32>,
    pub taps: [f32; 9],
}

impl Sfilter {
    pub fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let rows = n.div_ceil(WIDTH);
        let image = values(rng, (rows + 2) * IN_W);
        let taps: [f32; 9] = values(rng, 9).try_into().unwrap();
        Sfilter { rows, image, taps }
    }

    fn window(&self, e: usize, j: usize) -> f32 {
        let (y, x) = (e / WIDTH, e % WIDTH);
        self.image[(y + j / 3) * IN_W + x + j % 3]
    }
}

impl Problem for Sfilter {
    fn bench(&self) -> Bench {
        Bench::Sfilter
    }

    fn items(&self) -> usize {
        self.rows * WIDTH
    }

    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError> {
        let n = self.items();
        let mut k = Kb::new(cfg, v, n);
        k.require_levels(0)?;
        let hs = (k.h() * 4) as i32;
        let taps = k.heap.floats(&self.taps);
        if v.dmsl() {
            let win = pack(&k, 9, |e, j| self.window(e, j));
            let win = k.heap.floats(&win);
            let out = k.output("out", n);
            k.prologue();
            load_taps(&mut k, taps);
            k.lane_count("t3", 1);
            k.li("t4", 9);
            k.ins(OTHER, "mul t4, t3, t4");
            k.item_ptr("a1", win, 4);
            k.stream(0, freg("ft0"), StreamMode::Read, "a1", hs, "t4");
            k.item_ptr("a0", out, 4);
            k.stream(1, freg("fa1"), StreamMode::Write, "a0", hs, "t3");
            k.begin_loop();
            k.ins(COMP, "fmul.s ft9, ft0, fs0");
            for tap in &TAPS[1..8] {
                k.ins(COMP, format!("fmadd.s ft9, ft0, {tap}, ft9"));
            }
            k.loop_end_label();
            k.ins(COMP, "fmadd.s fa1, ft0, fs8, ft9");
            k.finish_streaming();
            return k.build();
        }
        let img = k.heap.floats(&self.image);
        let out = k.output("out", n);
        k.prologue();
        load_taps(&mut k, taps);
        k.item_ptr("a2", out, 4);
        k.li("a6", img);
        k.li("a5", IN_W as u32);
        k.begin_loop();
        k.ins(OTHER, format!("srli t3, s2, {}", WIDTH.trailing_zeros()));
        k.ins(OTHER, format!("andi t4, s2, {}", WIDTH - 1));
        k.ins(OTHER, "mul t3, t3, a5");
        k.ins(OTHER, "add t3, t3, t4");
        k.ins(OTHER, "slli t3, t3, 2");
        k.ins(MEM, "add a3, a6, t3");
        for j in 0..9 {
            let off = ((j / 3) * IN_W + j % 3) * 4;
            k.ins(MEM, format!("flw ft{j}, {off}(a3)"));
        }
        k.ins(COMP, "fmul.s ft9, ft0, fs0");
        for (j, tap) in TAPS.iter().enumerate().skip(1) {
            k.ins(COMP, format!("fmadd.s ft9, ft{j}, {tap}, ft9"));
        }
        k.ins(MEM, "fsw ft9, 0(a2)");
        k.update(MEM, "add a2, a2, s8");
        k.end_loop(true);
        k.build()
    }

    fn golden(&self) -> Vec<Vec<u32>> {
        let out: Vec<f32> = (0..self.items())
            .map(|e| (1..9).fold(self.window(e, 0) * self.taps[0], |acc, j| self.window(e, j).mul_add(self.taps[j], acc)))
            .collect();
        vec![bits(&out)]
    }
}

fn load_taps(k: &mut Kb, addr: u32) {
    k.li("t2", addr);
    for (j, tap) in TAPS.iter().enumerate() {
        k.ins(MEM, format!("flw {tap}, {}(t2)", j * 4));
    }
}
