//! Randomized oracles for the loop controller and the streaming lanes.
//!
//! [`LoopProgram`] builds nested hardware-loop programs and predicts the
//! `(pc, mask)` fetch stream of their body instructions with a plain
//! interpreter that evaluates the software predication by hand.
//! [`StreamProgram`] builds per-lane strided streams and compares what the
//! lanes deliver with a load-based kernel and with the host model, while
//! checking credit and arbiter invariants on every cycle.

use crate::cfm::ENABLE_BIT;
use crate::config::{CoreConfig, Extensions};
use crate::csr::{StreamCfg, StreamMode};
use crate::isa::{assemble, Category, KernelImage, Reg};
use crate::kernels::{lane_mask, Heap};
use crate::memsys::check_arbitration;
use crate::pipeline::{Core, TraceKind};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

/// Per-warp `(pc, effective mask)` of every compute or memory fetch.
pub type FetchStream = Vec<Vec<(u32, u32)>>;

#[derive(Clone, Debug)]
pub struct Level {
    pub bound: u32,
    /// Tail mask of each warp.
    pub tails: Vec<u32>,
    /// Body instructions before the nested loop (or branch).
    pub pre: usize,
    /// Body instructions after it.
    pub post: usize,
}

/// A divergent `split`/`join` region inside the innermost body.
#[derive(Clone, Debug)]
pub struct Branch {
    /// Lanes taking the then-path.
    pub pred: u32,
    pub then_len: usize,
    pub else_len: usize,
}

#[derive(Clone, Debug)]
pub struct LoopProgram {
    pub warps: usize,
    pub threads: usize,
    /// Thread mask each warp starts from.
    pub entry: Vec<u32>,
    pub before: usize,
    pub after: usize,
    /// Outermost first.
    pub levels: Vec<Level>,
    pub branch: Option<Branch>,
}

enum Piece {
    Body(usize),
    Loop(usize),
}

impl LoopProgram {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let threads = *[4usize, 8, 16, 32].choose(rng).unwrap();
        let warps = rng.gen_range(1..=4);
        let full = lane_mask(threads);
        let depth = rng.gen_range(1..=3);
        let branch = rng.gen_bool(0.5).then(|| Branch {
            pred: rng.gen::<u32>() & full,
            then_len: rng.gen_range(0..=3),
            else_len: rng.gen_range(0..=3),
        });
        let levels = (0..depth)
            .map(|l| {
                let inner = l + 1 == depth;
                let tails = (0..warps)
                    .map(|_| if rng.gen_bool(0.3) { full } else { rng.gen::<u32>() & full })
                    .collect();
                let pre = rng.gen_range(0..=2);
                // every level needs a last body instruction of its own
                let post = if inner && branch.is_none() && pre > 0 {
                    rng.gen_range(0..=2)
                } else {
                    rng.gen_range(1..=2)
                };
                Level { bound: rng.gen_range(1..=9), tails, pre, post }
            })
            .collect();
        let entry = (0..warps)
            .map(|_| loop {
                let m = if rng.gen_bool(0.5) { full } else { rng.gen::<u32>() & full };
                if m != 0 {
                    break m;
                }
            })
            .collect();
        LoopProgram {
            warps,
            threads,
            entry,
            before: rng.gen_range(0..=2),
            after: rng.gen_range(0..=2),
            levels,
            branch,
        }
    }

    pub fn config(&self) -> CoreConfig {
        CoreConfig {
            num_warps: self.warps,
            num_threads: self.threads,
            loop_levels: 3,
            extensions: Extensions { cfm: true, lps: true, dmsl: false },
            max_cycles: 2_000_000,
            ..CoreConfig::default()
        }
    }

    /// Assembly text plus the heap holding the per-warp tables.
    pub fn build(&self) -> Result<KernelImage, String> {
        let mut heap = Heap::new();
        let entry = heap.words(&self.entry);
        let tails: Vec<u32> = self.levels.iter().map(|l| heap.words(&l.tails)).collect();
        let mut src = String::from(".text\n_start:\n");
        let other = |s: &mut String, text: String| writeln!(s, "    {text} #cat:other").unwrap();
        other(&mut src, "csrr s1, wid".into());
        other(&mut src, "slli s1, s1, 2".into());
        other(&mut src, format!("li t0, {}", entry as i32));
        other(&mut src, "add t0, t0, s1".into());
        other(&mut src, "lw t1, 0(t0)".into());
        other(&mut src, "tmc t1".into());
        if let Some(b) = &self.branch {
            other(&mut src, "csrr t0, tid".into());
            other(&mut src, format!("li t2, {}", b.pred as i32));
            other(&mut src, "srl t2, t2, t0".into());
            other(&mut src, "andi s2, t2, 1".into());
        }
        for (l, lvl) in self.levels.iter().enumerate() {
            other(&mut src, format!("la t0, L{l}_start"));
            other(&mut src, format!("csrw cfm{l}.start, t0"));
            other(&mut src, format!("la t0, L{l}_end"));
            other(&mut src, format!("csrw cfm{l}.end, t0"));
            other(&mut src, format!("li t0, {}", tails[l] as i32));
            other(&mut src, "add t0, t0, s1".into());
            other(&mut src, "lw t1, 0(t0)".into());
            other(&mut src, format!("csrw cfm{l}.tail, t1"));
            other(&mut src, format!("li t0, {}", (ENABLE_BIT | lvl.bound) as i32));
            other(&mut src, format!("csrw cfm{l}.bound, t0"));
            writeln!(src, ".hwloop {l}, L{l}_start, L{l}_end").unwrap();
        }
        let mut next = 0usize;
        fn body(s: &mut String, next: &mut usize, label: Option<&str>) {
            if let Some(l) = label {
                writeln!(s, "{l}:").unwrap();
            }
            writeln!(s, "b{next}:").unwrap();
            writeln!(s, "    addi a{r}, a{r}, 1 #cat:comp", r = *next % 6).unwrap();
            *next += 1;
        }
        for _ in 0..self.before {
            body(&mut src, &mut next, None);
        }
        for (l, lvl) in self.levels.iter().enumerate() {
            writeln!(src, "L{l}_start:").unwrap();
            for _ in 0..lvl.pre {
                body(&mut src, &mut next, None);
            }
        }
        if let Some(b) = &self.branch {
            other(&mut src, "split s2, else_path".into());
            for _ in 0..b.then_len {
                body(&mut src, &mut next, None);
            }
            other(&mut src, "join joined".into());
            writeln!(src, "else_path:").unwrap();
            for _ in 0..b.else_len {
                body(&mut src, &mut next, None);
            }
            other(&mut src, "join joined".into());
            writeln!(src, "joined:").unwrap();
        }
        for (l, lvl) in self.levels.iter().enumerate().rev() {
            for i in 0..lvl.post {
                let end = format!("L{l}_end");
                body(&mut src, &mut next, (i + 1 == lvl.post).then_some(end.as_str()));
            }
            if lvl.post == 0 {
                // innermost body ends on its last pre instruction
                let last = next - 1;
                src = src.replace(&format!("b{last}:\n"), &format!("L{l}_end:\nb{last}:\n"));
            }
        }
        for _ in 0..self.after {
            body(&mut src, &mut next, None);
        }
        writeln!(src, "    tmc zero #cat:other").unwrap();
        let mut image = assemble(&src).map_err(|e| format!("{e}\n{src}"))?;
        heap.install(&mut image);
        Ok(image)
    }

    /// Interprets the program and returns the expected body fetches.
    pub fn reference(&self, image: &KernelImage) -> FetchStream {
        let pc = |i: usize| image.symbol(&format!("b{i}")).unwrap();
        let full = lane_mask(self.threads);
        let mut out = Vec::new();
        for w in 0..self.warps {
            let mut s = Vec::new();
            let mut id = 0usize;
            let m = self.entry[w];
            for _ in 0..self.before {
                s.push((pc(id), m));
                id += 1;
            }
            let start = id;
            let pieces = self.layout(start);
            self.run_level(0, m, w, full, &pieces, &pc, &mut s);
            let count: usize = self.levels.iter().map(|l| l.pre + l.post).sum::<usize>()
                + self.branch.as_ref().map_or(0, |b| b.then_len + b.else_len);
            id = start + count;
            for _ in 0..self.after {
                s.push((pc(id), m));
                id += 1;
            }
            out.push(s);
        }
        out
    }

    /// Body instruction ids of each level, in program order, as laid out by
    /// [`LoopProgram::build`].
    fn layout(&self, first: usize) -> Vec<Vec<Piece>> {
        let mut id = first;
        let depth = self.levels.len();
        let mut pre: Vec<Vec<usize>> = Vec::new();
        for lvl in &self.levels {
            pre.push((id..id + lvl.pre).collect());
            id += lvl.pre;
        }
        // branch ids are handled by run_branch
        let branch_ids = self.branch.as_ref().map_or(0, |b| b.then_len + b.else_len);
        let branch_first = id;
        id += branch_ids;
        let mut post: Vec<Vec<usize>> = vec![Vec::new(); depth];
        for l in (0..depth).rev() {
            post[l] = (id..id + self.levels[l].post).collect();
            id += self.levels[l].post;
        }
        (0..depth)
            .map(|l| {
                let mut p: Vec<Piece> = pre[l].iter().map(|&i| Piece::Body(i)).collect();
                if l + 1 < depth {
                    p.push(Piece::Loop(l + 1));
                } else if self.branch.is_some() {
                    p.push(Piece::Loop(usize::MAX - branch_first));
                }
                p.extend(post[l].iter().map(|&i| Piece::Body(i)));
                p
            })
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn run_level(
        &self,
        l: usize,
        m: u32,
        w: usize,
        full: u32,
        pieces: &[Vec<Piece>],
        pc: &dyn Fn(usize) -> u32,
        s: &mut Vec<(u32, u32)>,
    ) {
        let lvl = &self.levels[l];
        for k in 0..lvl.bound {
            let mk = m & if k + 1 == lvl.bound { lvl.tails[w] } else { full };
            for p in &pieces[l] {
                match *p {
                    Piece::Body(i) => s.push((pc(i), mk)),
                    Piece::Loop(inner) if inner < self.levels.len() => {
                        self.run_level(inner, mk, w, full, pieces, pc, s)
                    }
                    Piece::Loop(code) => self.run_branch(usize::MAX - code, mk, pc, s),
                }
            }
        }
    }

    fn run_branch(&self, first: usize, m: u32, pc: &dyn Fn(usize) -> u32, s: &mut Vec<(u32, u32)>) {
        let b = self.branch.as_ref().unwrap();
        let taken = m & b.pred;
        let els = m & !b.pred;
        if taken != 0 {
            s.extend((first..first + b.then_len).map(|i| (pc(i), taken)));
        }
        if taken == 0 || els != 0 {
            let e = first + b.then_len;
            s.extend((e..e + b.else_len).map(|i| (pc(i), els)));
        }
    }

    /// Runs the program on the simulator and collects the body fetches.
    pub fn hardware(&self, image: &KernelImage) -> Result<FetchStream, String> {
        let mut core = Core::new(self.config()).map_err(|e| e.to_string())?;
        core.load(image).map_err(|e| e.to_string())?;
        core.enable_trace();
        core.launch(self.warps);
        core.run().map_err(|e| e.to_string())?;
        let mut out = vec![Vec::new(); self.warps];
        for e in core.take_trace() {
            if e.kind == TraceKind::Fetch && matches!(e.category, Category::Compute | Category::Memory) {
                out[e.warp].push((e.pc, e.mask));
            }
        }
        Ok(out)
    }

    /// Builds, runs and compares; the error names the first divergence.
    pub fn check(&self) -> Result<(), String> {
        let image = self.build()?;
        let want = self.reference(&image);
        let got = self.hardware(&image)?;
        for w in 0..self.warps {
            if let Some(i) = (0..want[w].len().max(got[w].len())).find(|&i| want[w].get(i) != got[w].get(i)) {
                return Err(format!(
                    "warp {w}, fetch {i}: expected {:x?}, got {:x?} ({self:?})",
                    want[w].get(i),
                    got[w].get(i)
                ));
            }
        }
        Ok(())
    }
}

/// Runs `count` random loop programs starting at `seed`.
pub fn check_loop_programs(seed: u64, count: usize) -> Result<(), String> {
    for i in 0..count as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
        LoopProgram::random(&mut rng).check().map_err(|e| format!("program {i}: {e}"))?;
    }
    Ok(())
}

const DATA_WORDS: usize = 512;

/// One per-lane linear read stream.
#[derive(Clone, Debug)]
pub struct LaneStream {
    /// Word index of each lane's first element, by global thread id.
    pub base: Vec<u32>,
    /// Word stride of each lane.
    pub stride: Vec<i32>,
}

#[derive(Clone, Debug)]
pub struct StreamProgram {
    pub cfg: CoreConfig,
    /// Elements consumed by every active lane.
    pub len: usize,
    pub entry: Vec<u32>,
    pub reads: Vec<LaneStream>,
    /// Copy the last read stream out through a write stream of this word
    /// stride (+1 or -1) instead of a store.
    pub write: Option<i32>,
    pub data: Vec<u32>,
}

/// What a stream program produced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamOutput {
    /// `[gid][stream][element]`, flattened.
    pub copied: Vec<u32>,
    /// `[gid][element]` region of the write stream.
    pub written: Vec<u32>,
}

impl StreamProgram {
    pub fn random(rng: &mut ChaCha8Rng) -> Self {
        let threads = *[4usize, 8, 16].choose(rng).unwrap();
        let warps = rng.gen_range(1..=4);
        let units = rng.gen_range(1..=4);
        let cfg = CoreConfig {
            num_warps: warps,
            num_threads: threads,
            num_dmsl: units,
            fifo_credits: *[1usize, 2, 4, 8].choose(rng).unwrap(),
            cache_ports: rng.gen_range(1..=3),
            max_cycles: 2_000_000,
            ..CoreConfig::default()
        };
        let write = (units > 1 && rng.gen_bool(0.5)).then(|| if rng.gen_bool(0.5) { 1 } else { -1 });
        let reads_n = if write.is_some() { rng.gen_range(1..units) } else { rng.gen_range(1..=units) };
        let len = rng.gen_range(1..=12);
        let h = warps * threads;
        let reads = (0..reads_n)
            .map(|_| {
                let mut base = Vec::new();
                let mut stride = Vec::new();
                for _ in 0..h {
                    let s: i32 = rng.gen_range(-4..=4);
                    let span = s.unsigned_abs() as usize * (len - 1);
                    let lo = if s < 0 { span } else { 0 };
                    let hi = if s < 0 { DATA_WORDS } else { DATA_WORDS - span };
                    base.push(rng.gen_range(lo..hi) as u32);
                    stride.push(s);
                }
                LaneStream { base, stride }
            })
            .collect();
        let full = lane_mask(threads);
        let entry = (0..warps)
            .map(|_| loop {
                let m = if rng.gen_bool(0.6) { full } else { rng.gen::<u32>() & full };
                if m != 0 {
                    break m;
                }
            })
            .collect();
        let data = (0..DATA_WORDS).map(|_| rng.gen()).collect();
        StreamProgram { cfg, len, entry, reads, write, data }
    }

    fn h(&self) -> usize {
        self.cfg.num_warps * self.cfg.num_threads
    }

    fn active(&self, gid: usize) -> bool {
        let t = self.cfg.num_threads;
        self.entry[gid / t] >> (gid % t) & 1 != 0
    }

    /// Outputs computed on the host.
    pub fn expected(&self) -> StreamOutput {
        let (h, n) = (self.h(), self.len);
        let stores = self.stores();
        let mut copied = vec![0u32; h * stores * n];
        let mut written = vec![0u32; h * n];
        for g in (0..h).filter(|&g| self.active(g)) {
            for (j, r) in self.reads.iter().enumerate() {
                for i in 0..n {
                    let v = self.data[(r.base[g] as i64 + i as i64 * r.stride[g] as i64) as usize];
                    if j < stores {
                        copied[(g * stores + j) * n + i] = v;
                    } else {
                        written[self.write_index(g, i)] = v;
                    }
                }
            }
        }
        StreamOutput { copied, written }
    }

    fn stores(&self) -> usize {
        self.reads.len() - self.write.is_some() as usize
    }

    fn write_index(&self, g: usize, i: usize) -> usize {
        match self.write {
            Some(s) if s < 0 => g * self.len + self.len - 1 - i,
            _ => g * self.len + i,
        }
    }

    /// Builds the streaming kernel (`streams`) or its load-based twin.
    pub fn build(&self, streams: bool) -> Result<(KernelImage, u32, u32), String> {
        let (h, n) = (self.h(), self.len);
        let stores = self.stores();
        let mut heap = Heap::new();
        let data = heap.words(&self.data);
        let entry = heap.words(&self.entry);
        let counts: Vec<u32> = (0..h).map(|g| if self.active(g) { n as u32 } else { 0 }).collect();
        let counts = heap.words(&counts);
        let mut tables = Vec::new();
        for r in &self.reads {
            let bases: Vec<u32> = r.base.iter().map(|b| data + 4 * b).collect();
            let strides: Vec<u32> = r.stride.iter().map(|s| (4 * s) as u32).collect();
            tables.push((heap.words(&bases), heap.words(&strides)));
        }
        let copied = heap.zeros(h * stores * n);
        let written = heap.zeros(h * n);
        let wstride = 4 * self.write.unwrap_or(1);
        let wbases: Vec<u32> =
            (0..h).map(|g| written + 4 * self.write_index(g, 0) as u32).collect();
        let wbases = heap.words(&wbases);

        let mut s = String::from(".text\n_start:\n");
        let mut ins = |cat: &str, text: String| writeln!(s, "    {text} #cat:{cat}").unwrap();
        let t = self.cfg.num_threads;
        ins("other", "csrr s0, tid".into());
        ins("other", "csrr s1, wid".into());
        ins("other", format!("li t0, {t}"));
        ins("other", "mul s2, s1, t0".into());
        ins("other", "add s2, s2, s0".into());
        ins("other", "slli s2, s2, 2".into());
        ins("other", "slli s1, s1, 2".into());
        ins("other", format!("li t0, {}", entry as i32));
        ins("other", "add t0, t0, s1".into());
        ins("other", "lw t1, 0(t0)".into());
        ins("pred", "tmc t1".into());
        ins("other", format!("li t0, {}", counts as i32));
        ins("other", "add t0, t0, s2".into());
        ins("other", "lw s11, 0(t0)".into());
        ins("other", format!("li t3, {}", copied as i32));
        ins("other", format!("li t2, {}", stores * n));
        ins("other", "mul t4, s2, t2".into());
        ins("other", "add t3, t3, t4".into());
        let load = |ins: &mut dyn FnMut(&str, String), dst: &str, table: u32| {
            ins("other", format!("li t0, {}", table as i32));
            ins("other", "add t0, t0, s2".into());
            ins("mem", format!("lw {dst}, 0(t0)"));
        };
        for (j, &(bases, strides)) in tables.iter().enumerate() {
            if streams {
                let cfg = StreamCfg {
                    reg: Reg::int(10 + j as u8),
                    elem_bytes: 4,
                    prefetch: true,
                    redirect: true,
                    mode: StreamMode::Read,
                };
                load(&mut ins, "t1", bases);
                ins("other", format!("csrw dmsl{j}.base, t1"));
                load(&mut ins, "t1", strides);
                ins("other", format!("csrw dmsl{j}.stride, t1"));
                ins("other", format!("csrw dmsl{j}.count, s11"));
                ins("other", format!("li t1, {}", cfg.pack() as i32));
                ins("other", format!("csrw dmsl{j}.cfg, t1"));
            } else {
                load(&mut ins, &format!("s{}", 3 + j), bases);
                load(&mut ins, &format!("s{}", 7 + j), strides);
            }
        }
        if self.write.is_some() {
            let u = self.reads.len();
            if streams {
                let cfg = StreamCfg {
                    reg: Reg::int(17),
                    elem_bytes: 4,
                    prefetch: true,
                    redirect: true,
                    mode: StreamMode::Write,
                };
                load(&mut ins, "t1", wbases);
                ins("other", format!("csrw dmsl{u}.base, t1"));
                ins("other", format!("li t1, {wstride}"));
                ins("other", format!("csrw dmsl{u}.stride, t1"));
                ins("other", format!("csrw dmsl{u}.count, s11"));
                ins("other", format!("li t1, {}", cfg.pack() as i32));
                ins("other", format!("csrw dmsl{u}.cfg, t1"));
            } else {
                load(&mut ins, "gp", wbases);
            }
        }
        ins("loop", "li t5, 0".into());
        ins("loop", format!("li t6, {n}"));
        writeln!(s, "top:").unwrap();
        let mut ins = |cat: &str, text: String| writeln!(s, "    {text} #cat:{cat}").unwrap();
        for j in 0..self.reads.len() {
            if !streams {
                ins("mem", format!("lw a{j}, 0(s{})", 3 + j));
                ins("mem", format!("add s{0}, s{0}, s{1}", 3 + j, 7 + j));
            }
            if j < stores {
                ins("mem", format!("sw a{j}, {}(t3)", j * n * 4));
            } else if streams {
                ins("comp", format!("add a7, a{j}, zero"));
            } else {
                ins("mem", format!("sw a{j}, 0(gp)"));
                ins("mem", format!("addi gp, gp, {wstride}"));
            }
        }
        ins("mem", "addi t3, t3, 4".into());
        ins("loop", "addi t5, t5, 1".into());
        ins("loop", "blt t5, t6, top".into());
        ins("other", "tmc zero".into());
        let mut image = assemble(&s).map_err(|e| format!("{e}\n{s}"))?;
        heap.install(&mut image);
        Ok((image, copied, written))
    }

    /// Runs one of the two kernels, checking credit and arbiter invariants
    /// on every cycle of the streaming run.
    pub fn run(&self, streams: bool) -> Result<StreamOutput, String> {
        let (image, copied, written) = self.build(streams)?;
        let mut cfg = self.cfg.clone();
        cfg.extensions = if streams { Extensions::ALL } else { Extensions::NONE };
        let mut core = Core::new(cfg.clone()).map_err(|e| e.to_string())?;
        core.load(&image).map_err(|e| e.to_string())?;
        core.enable_arbiter_trace();
        core.launch(cfg.num_warps);
        while !core.done() {
            if core.cycle() >= cfg.max_cycles {
                return Err("cycle limit".into());
            }
            core.tick().map_err(|e| e.to_string())?;
            if let Some(d) = core.dmsl() {
                d.check_credits()?;
            }
            for rec in core.memsys_mut().take_trace() {
                check_arbitration(&rec, cfg.cache_ports)?;
            }
        }
        core.stats().check()?;
        let (h, n) = (self.h(), self.len);
        let mem = core.memory();
        Ok(StreamOutput {
            copied: mem.read_u32s(copied, h * self.stores() * n).map_err(|e| e.to_string())?,
            written: mem.read_u32s(written, h * n).map_err(|e| e.to_string())?,
        })
    }

    pub fn check(&self) -> Result<(), String> {
        let want = self.expected();
        let base = self.run(false)?;
        if base != want {
            return Err(format!("load kernel disagrees with the host model ({self:?})"));
        }
        let got = self.run(true)?;
        if got != want {
            return Err(format!("streams deliver {got:x?}, loads {want:x?} ({self:?})"));
        }
        Ok(())
    }
}

/// Runs `count` random stream programs starting at `seed`.
pub fn check_stream_programs(seed: u64, count: usize) -> Result<(), String> {
    for i in 0..count as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
        StreamProgram::random(&mut rng).check().map_err(|e| format!("program {i}: {e}"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(bound: u32, tail: u32, branch: Option<Branch>) -> LoopProgram {
        LoopProgram {
            warps: 1,
            threads: 16,
            entry: vec![0xffff],
            before: 1,
            after: 1,
            levels: vec![Level { bound, tails: vec![tail], pre: 1, post: 1 }],
            branch,
        }
    }

    #[test]
    fn tail_applies_on_last_iteration() {
        let p = fixed(3, 0x00ff, None);
        let image = p.build().unwrap();
        let masks: Vec<u32> = p.reference(&image)[0].iter().map(|&(_, m)| m).collect();
        assert_eq!(masks, vec![0xffff, 0xffff, 0xffff, 0xffff, 0xffff, 0x00ff, 0x00ff, 0xffff]);
        p.check().unwrap();
    }

    #[test]
    fn divergent_branch_inside_tail() {
        let p = fixed(2, 0x00ff, Some(Branch { pred: 0x0f0f, then_len: 1, else_len: 1 }));
        let image = p.build().unwrap();
        let want = p.reference(&image);
        // last iteration: then-path 0x000f, else-path 0x00f0
        let tail: Vec<u32> = want[0].iter().rev().skip(1).take(3).map(|&(_, m)| m).collect();
        assert_eq!(tail, vec![0x00ff, 0x00f0, 0x000f]);
        p.check().unwrap();
    }

    #[test]
    fn zero_tail_still_fetches() {
        let p = fixed(2, 0, Some(Branch { pred: 0x1, then_len: 1, else_len: 1 }));
        p.check().unwrap();
    }

    #[test]
    fn random_loop_programs_match() {
        check_loop_programs(100, 40).unwrap();
    }

    #[test]
    fn random_stream_programs_match() {
        check_stream_programs(200, 25).unwrap();
    }
}
