//! Shared scaffolding for the kernel generators: assembly text emission,
//! the launch-time data heap, work folding tables and the per-variant
//! prologue, loop skeleton and epilogue.
//!
//! Register conventions used by every kernel:
//!
//! | reg | meaning |
//! |-----|---------|
//! | s0  | thread id |
//! | s1  | warp id |
//! | s2  | item index of this lane in the current iteration |
//! | s3  | n - 1 + thread id |
//! | s4  | H = W * T |
//! | s5  | saved thread mask |
//! | s7  | full thread mask |
//! | s8  | H * 4 |
//! | s9  | software iteration counter |
//! | s10 | iterations of this warp |
//! | s11 | T - 1 |
//!
//! Only the registers a variant needs are set up: `s3`, `s5`, `s7` and `s11`
//! exist only without LPS, `s4` and `s8` only without DMSL.
//!
//! `t0` is scratch for predication and CSR setup, `t1` is the usual inner
//! loop counter and `t6` carries the stride while streams are configured.
//! Kernels own `a0`-`a7`, `t2`-`t5`, `ra`, `gp`, `tp` and the FP file.

use super::{Buffer, BuiltKernel, KernelError, Variant};
use crate::cfm::ENABLE_BIT;
use crate::config::CoreConfig;
use crate::csr::{StreamCfg, StreamMode};
use crate::isa::{assemble, KernelImage};
use crate::isa::encoding::FP_ABI;
use crate::isa::{Category, Reg};
use std::fmt::Write;

const HEAP_BASE: u32 = 0x0010_0000;
const HEAP_ALIGN: u32 = 4096;

/// Mapping of `n` work items onto `W` warps of `T` threads.
///
/// Item `e = k*H + w*T + t` runs on lane `t` of warp `w` in iteration `k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fold {
    pub n: usize,
    pub warps: usize,
    pub threads: usize,
}

impl Fold {
    pub fn new(n: usize, cfg: &CoreConfig) -> Self {
        Fold { n, warps: cfg.num_warps, threads: cfg.num_threads }
    }

    pub fn h(&self) -> usize {
        self.warps * self.threads
    }

    /// Iterations in which warp `w` has at least one live lane.
    pub fn iters(&self, w: usize) -> usize {
        let base = w * self.threads;
        if self.n <= base {
            0
        } else {
            (self.n - base).div_ceil(self.h())
        }
    }

    pub fn max_iters(&self) -> usize {
        self.n.div_ceil(self.h())
    }

    /// Lanes of warp `w` that are live in its last iteration.
    pub fn tail(&self, w: usize) -> u32 {
        let it = self.iters(w);
        if it == 0 {
            return 0;
        }
        let start = (it - 1) * self.h() + w * self.threads;
        let live = (self.n - start).min(self.threads);
        lane_mask(live)
    }

    /// Items handled by lane `t` of warp `w`.
    pub fn count(&self, w: usize, t: usize) -> usize {
        let it = self.iters(w);
        if it == 0 {
            return 0;
        }
        it - 1 + ((self.tail(w) >> t) & 1) as usize
    }

    /// Item handled by (`k`, `w`, `t`), if it exists.
    pub fn item(&self, k: usize, w: usize, t: usize) -> Option<usize> {
        let e = k * self.h() + w * self.threads + t;
        (e < self.n).then_some(e)
    }
}

/// FP register by ABI name.
pub fn freg(name: &str) -> Reg {
    let i = FP_ABI.iter().position(|n| *n == name).expect("FP register name");
    Reg::fp(i as u8)
}

pub fn lane_mask(lanes: usize) -> u32 {
    if lanes >= 32 {
        u32::MAX
    } else {
        (1u32 << lanes) - 1
    }
}

/// Bump allocator for launch-time buffers.
#[derive(Debug, Default)]
pub struct Heap {
    next: u32,
    segments: Vec<(u32, Vec<u8>)>,
}

impl Heap {
    pub fn new() -> Self {
        Heap { next: HEAP_BASE, segments: Vec::new() }
    }

    pub fn bytes(&mut self, data: Vec<u8>) -> u32 {
        let base = self.next;
        let len = data.len().max(4) as u32;
        self.next = (base + len).div_ceil(HEAP_ALIGN) * HEAP_ALIGN;
        if !data.is_empty() {
            self.segments.push((base, data));
        }
        base
    }

    pub fn words(&mut self, w: &[u32]) -> u32 {
        self.bytes(w.iter().flat_map(|v| v.to_le_bytes()).collect())
    }

    pub fn floats(&mut self, f: &[f32]) -> u32 {
        self.bytes(f.iter().flat_map(|v| v.to_le_bytes()).collect())
    }

    pub fn zeros(&mut self, words: usize) -> u32 {
        self.bytes(vec![0; words * 4])
    }

    pub fn end(&self) -> u32 {
        self.next
    }

    /// Moves every allocated buffer into `image`.
    pub fn install(self, image: &mut KernelImage) {
        for (base, bytes) in self.segments {
            image.add_data(base, bytes);
        }
    }
}

/// Assembly text with a category tag on every instruction.
#[derive(Debug, Default)]
pub struct Asm {
    src: String,
}

impl Asm {
    pub fn ins(&mut self, cat: Category, text: impl AsRef<str>) {
        let _ = writeln!(self.src, "    {:<36} #cat:{}", text.as_ref(), cat);
    }

    pub fn label(&mut self, name: &str) {
        let _ = writeln!(self.src, "{name}:");
    }

    pub fn directive(&mut self, text: impl AsRef<str>) {
        let _ = writeln!(self.src, "    {}", text.as_ref());
    }

    pub fn source(&self) -> &str {
        &self.src
    }
}

pub use Category::{Compute as COMP, LoopCF as LOOP, Memory as MEM, Other as OTHER, Predication as PRED};

/// Kernel under construction.
pub struct Kb<'a> {
    pub a: Asm,
    pub heap: Heap,
    pub cfg: &'a CoreConfig,
    pub fold: Fold,
    pub v: Variant,
    outputs: Vec<Buffer>,
    /// `[bound, tail]` per warp.
    warp_tbl: u32,
    count_tbl: u32,
    full_mask_ready: bool,
    stride_ready: Option<i32>,
    /// Scale `k` while `t1` holds `s2 * k`.
    scaled: Option<u32>,
    /// Instructions closing the body of the work loop, emitted by `end_loop`.
    updates: Vec<(Category, String)>,
    loops: usize,
}

impl<'a> Kb<'a> {
    pub fn new(cfg: &'a CoreConfig, v: Variant, n: usize) -> Self {
        let fold = Fold::new(n, cfg);
        let mut heap = Heap::new();
        let per_warp: Vec<u32> = (0..fold.warps).flat_map(|w| [fold.iters(w) as u32, fold.tail(w)]).collect();
        let counts: Vec<u32> = (0..fold.h()).map(|g| fold.count(g / fold.threads, g % fold.threads) as u32).collect();
        let warp_tbl = heap.words(&per_warp);
        let count_tbl = heap.words(&counts);
        Kb {
            a: Asm::default(),
            heap,
            cfg,
            fold,
            v,
            outputs: Vec::new(),
            warp_tbl,
            count_tbl,
            full_mask_ready: false,
            stride_ready: None,
            scaled: None,
            updates: Vec::new(),
            loops: 1,
        }
    }

    pub fn t(&self) -> usize {
        self.fold.threads
    }

    pub fn h(&self) -> usize {
        self.fold.h()
    }

    pub fn output(&mut self, name: &str, words: usize) -> u32 {
        let addr = self.heap.zeros(words);
        self.outputs.push(Buffer { name: name.into(), addr, words });
        addr
    }

    pub fn ins(&mut self, cat: Category, text: impl AsRef<str>) {
        if text.as_ref().split_whitespace().nth(1) == Some("t1,") {
            self.scaled = None;
        }
        self.a.ins(cat, text);
    }

    pub fn label(&mut self, name: &str) {
        self.scaled = None;
        self.a.label(name);
    }

    pub fn li(&mut self, reg: &str, value: u32) {
        self.ins(OTHER, format!("li {reg}, {}", value as i32));
    }

    pub fn lif(&mut self, freg: &str, value: f32) {
        self.li("t0", value.to_bits());
        self.ins(OTHER, format!("fmv.w.x {freg}, t0"));
    }

    /// `dst = base + s2 * scale`: a per-thread pointer to the first item.
    pub fn item_ptr(&mut self, dst: &str, base: u32, scale: u32) {
        debug_assert_ne!(dst, "t1");
        self.scaled_index(scale);
        self.li(dst, base);
        self.ins(OTHER, format!("add {dst}, {dst}, t1"));
    }

    /// `t1 = s2 * scale`.
    fn scaled_index(&mut self, scale: u32) {
        if self.scaled == Some(scale) {
            return;
        }
        if scale.is_power_of_two() {
            self.ins(OTHER, format!("slli t1, s2, {}", scale.trailing_zeros()));
        } else {
            self.li("t2", scale);
            self.ins(OTHER, "mul t1, s2, t2");
        }
        self.scaled = Some(scale);
    }

    /// `dst = count_table[gid] * mult`: items of this lane times `mult`.
    pub fn lane_count(&mut self, dst: &str, mult: u32) {
        self.scaled_index(4);
        self.li("t2", self.count_tbl);
        self.ins(OTHER, "add t0, t1, t2");
        self.ins(MEM, format!("lw {dst}, 0(t0)"));
        if mult != 1 {
            self.li("t2", mult);
            self.ins(OTHER, format!("mul {dst}, {dst}, t2"));
        }
    }

    /// Common prologue; branches to `done` when the warp has no work.
    pub fn prologue(&mut self) {
        let t = self.t() as u32;
        let h = self.h() as u32;
        self.a.directive(".text");
        self.label("_start");
        self.ins(OTHER, "csrr s0, tid");
        self.ins(OTHER, "csrr s1, wid");
        if t.is_power_of_two() {
            self.ins(OTHER, format!("slli s2, s1, {}", t.trailing_zeros()));
        } else {
            self.li("t2", t);
            self.ins(OTHER, "mul s2, s1, t2");
        }
        self.ins(OTHER, "add s2, s2, s0");
        self.li("t0", self.warp_tbl);
        self.ins(OTHER, "slli t2, s1, 3");
        self.ins(OTHER, "add t0, t0, t2");
        self.ins(MEM, "lw s10, 0(t0)");
        if !self.v.lps() {
            self.li("s3", self.fold.n as u32 - 1);
            self.ins(OTHER, "add s3, s3, s0");
            self.li("s11", t - 1);
            self.full_mask();
            self.ins(PRED, "csrr s5, tmask");
        }
        if !self.v.dmsl() {
            self.li("s4", h);
            self.li("s8", h * 4);
        }
        self.ins(LOOP, "beqz s10, done");
        if self.v.cfm() {
            // work loop
            self.ins(OTHER, "lw t2, 4(t0)");
            self.ins(OTHER, "csrw cfm0.tail, t2");
            self.ins(OTHER, "la t0, loop");
            self.ins(OTHER, "csrw cfm0.start, t0");
            self.ins(OTHER, "la t0, loop_end");
            self.ins(OTHER, "csrw cfm0.end, t0");
            self.li("t0", ENABLE_BIT);
            self.ins(OTHER, "or t0, t0, s10");
            self.ins(OTHER, "csrw cfm0.bound, t0");
            self.a.directive(".hwloop 0, loop, loop_end");
        }
    }

    fn full_mask(&mut self) {
        if !self.full_mask_ready {
            self.li("s7", lane_mask(self.t()));
            self.full_mask_ready = true;
        }
    }

    /// `t0 = T - 1 - min(n - 1 - base, T - 1)` with `base = s2 - s0` the
    /// item of lane 0. It is the shift turning the full
    /// mask into this iteration's live lanes.
    fn mask_calc(&mut self) {
        self.ins(PRED, "sub t0, s3, s2");
        self.ins(PRED, "minu t0, t0, s11");
        self.ins(PRED, "sub t0, s11, t0");
    }

    /// Configures hardware loop `level` over `start..=end` with a constant
    /// trip count. Only meaningful for CFM variants.
    pub fn hw_loop(&mut self, start: &str, end: &str, bound: u32) -> usize {
        let level = self.loops;
        assert!(level < self.cfg.loop_levels, "kernel needs more loop levels");
        self.loops += 1;
        self.ins(OTHER, format!("la t0, {start}"));
        self.ins(OTHER, format!("csrw cfm{level}.start, t0"));
        if end != start {
            self.ins(OTHER, format!("la t0, {end}"));
        }
        self.ins(OTHER, format!("csrw cfm{level}.end, t0"));
        if self.full_mask_ready {
            self.ins(OTHER, format!("csrw cfm{level}.tail, s7"));
        } else {
            // the CSR keeps only the low T bits
            self.li("t2", u32::MAX);
            self.ins(OTHER, format!("csrw cfm{level}.tail, t2"));
        }
        self.li("t0", ENABLE_BIT | bound);
        self.ins(OTHER, format!("csrw cfm{level}.bound, t0"));
        self.a.directive(format!(".hwloop {level}, {start}, {end}"));
        level
    }

    /// Hardware loop levels the kernel will need beyond the work loop.
    pub fn require_levels(&self, inner: usize) -> Result<(), KernelError> {
        if self.v.cfm() && inner + 1 > self.cfg.loop_levels {
            return Err(KernelError::UnsupportedConfig(format!(
                "needs {} hardware loop levels, core has {}",
                inner + 1,
                self.cfg.loop_levels
            )));
        }
        if self.v.dmsl() && self.cfg.num_dmsl < 3 {
            return Err(KernelError::UnsupportedConfig("needs 3 DMSLs".into()));
        }
        Ok(())
    }

    /// Configures DMSL `unit` as a linear stream mapped onto `reg`. `base`
    /// and `count` are registers holding per-lane values.
    pub fn stream(&mut self, unit: usize, reg: Reg, mode: StreamMode, base: &str, stride: i32, count: &str) {
        let word = StreamCfg { reg, elem_bytes: 4, prefetch: true, redirect: true, mode }.pack();
        self.ins(OTHER, format!("csrw dmsl{unit}.base, {base}"));
        if self.stride_ready != Some(stride) {
            self.li("t6", stride as u32);
            self.stride_ready = Some(stride);
        }
        self.ins(OTHER, format!("csrw dmsl{unit}.stride, t6"));
        self.ins(OTHER, format!("csrw dmsl{unit}.count, {count}"));
        self.li("t0", word);
        self.ins(OTHER, format!("csrw dmsl{unit}.cfg, t0"));
    }

    /// Opens the work loop body. The CFM-only variant still predicates the
    /// tail in software at the top of each iteration.
    pub fn begin_loop(&mut self) {
        if !self.v.cfm() {
            self.li("s9", 0);
            self.mask_calc();
            self.ins(PRED, "srl t0, s7, t0");
            self.ins(PRED, "tmc t0");
        }
        self.label("loop");
        if self.v.cfm() && !self.v.lps() {
            self.mask_calc();
            self.ins(PRED, "srl t0, s7, t0");
            self.ins(PRED, "tmc t0");
        }
    }

    /// Queues an instruction that advances a per-item pointer.
    pub fn update(&mut self, cat: Category, text: impl Into<String>) {
        self.updates.push((cat, text.into()));
    }

    /// Closes the work loop. `uses_index` keeps `s2` current for kernels that
    /// derive addresses from the item index.
    pub fn end_loop(&mut self, uses_index: bool) {
        let updates = std::mem::take(&mut self.updates);
        match (self.v.cfm(), self.v.lps()) {
            (false, _) => {
                self.ins(LOOP, "addi s9, s9, 1");
                self.ins(PRED, "add s2, s2, s4");
                self.mask_calc();
                for (c, u) in &updates {
                    self.ins(*c, u);
                }
                self.ins(PRED, "srl t0, s7, t0");
                self.ins(PRED, "tmc t0");
                self.ins(LOOP, "blt s9, s10, loop");
                self.ins(PRED, "tmc s5");
            }
            (true, false) => {
                for (c, u) in &updates {
                    self.ins(*c, u);
                }
                self.label("loop_end");
                self.ins(PRED, "add s2, s2, s4");
                self.ins(PRED, "tmc s5");
            }
            (true, true) => {
                let mut tail = updates;
                if uses_index || tail.is_empty() {
                    tail.push((OTHER, "add s2, s2, s4".into()));
                }
                let last = tail.len() - 1;
                for (i, (c, u)) in tail.iter().enumerate() {
                    if i == last {
                        self.label("loop_end");
                    }
                    self.ins(*c, u);
                }
            }
        }
        self.label("done");
        self.ins(OTHER, "tmc zero");
    }

    /// Marks the last body instruction of a DMSL kernel as the loop end.
    pub fn loop_end_label(&mut self) {
        self.label("loop_end");
    }

    /// Epilogue for kernels whose body ends at `loop_end` (full variants).
    pub fn finish_streaming(&mut self) {
        self.label("done");
        self.ins(OTHER, "tmc zero");
    }

    pub fn build(self) -> Result<BuiltKernel, KernelError> {
        let mut image = assemble(self.a.source()).map_err(KernelError::Asm)?;
        let end = self.heap.end() as usize;
        if end > self.cfg.mem_size {
            return Err(KernelError::UnsupportedConfig(format!(
                "buffers need {end} bytes, memory has {}",
                self.cfg.mem_size
            )));
        }
        self.heap.install(&mut image);
        Ok(BuiltKernel { image, warps: self.fold.warps, outputs: self.outputs, fold: self.fold })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(w: usize, t: usize) -> CoreConfig {
        CoreConfig { num_warps: w, num_threads: t, ..CoreConfig::default() }
    }

    #[test]
    fn fold_even_split() {
        let f = Fold::new(64, &cfg(2, 16));
        assert_eq!((f.iters(0), f.iters(1)), (2, 2));
        assert_eq!(f.tail(0), 0xffff);
        assert_eq!(f.count(1, 15), 2);
    }

    #[test]
    fn fold_ragged_tail() {
        // 40 items over 2 warps of 16: warp 0 gets 0..16 and 32..40
        let f = Fold::new(40, &cfg(2, 16));
        assert_eq!(f.iters(0), 2);
        assert_eq!(f.iters(1), 1);
        assert_eq!(f.tail(0), 0x00ff);
        assert_eq!(f.tail(1), 0xffff);
        assert_eq!(f.count(0, 7), 2);
        assert_eq!(f.count(0, 8), 1);
        assert_eq!(f.item(1, 0, 7), Some(39));
        assert_eq!(f.item(1, 0, 8), None);
    }

    #[test]
    fn fold_idle_warp() {
        let f = Fold::new(10, &cfg(4, 4));
        assert_eq!(f.iters(3), 0);
        assert_eq!(f.tail(3), 0);
        assert_eq!(f.tail(2), 0b0011);
        let total: usize = (0..4).flat_map(|w| (0..4).map(move |t| (w, t))).map(|(w, t)| f.count(w, t)).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn heap_aligns_buffers() {
        let mut h = Heap::new();
        let a = h.words(&[1, 2, 3]);
        let b = h.floats(&[1.0]);
        assert_eq!(a, HEAP_BASE);
        assert_eq!(b % HEAP_ALIGN, 0);
        assert!(b > a);
    }
}
