//! The SIMT core: fetch (with the loop controller hook), a per-warp
//! instruction buffer, single-issue with scoreboard and stream-readiness
//! checks, ALU/FPU/LSU/CSR back ends and writeback, advanced one cycle per
//! [`Core::tick`].
//!
//! Instructions execute functionally when they issue. Units only model
//! timing: a destination stays reserved in the scoreboard until the unit's
//! latency (or the memory response, for loads) has elapsed.

pub mod exec;
mod warp;

pub use warp::{Fetched, IpdomEntry, Scoreboard, Warp};

use crate::cfm::{Cfm, CfmError};
use crate::config::{ConfigError, CoreConfig};
use crate::csr::{self, CsrError, CsrOp, CsrTarget, UnitType};
use crate::dmsl::{Dmsl, DmslError};
use crate::isa::{decode, encoding, Category, Instruction, KernelImage, Op, Reg, RegSpace, Unit};
use crate::memsys::{LineRequest, MemError, MemSys, Memory, Origin};
use crate::stats::RunStats;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use thiserror::Error;

/// Cycles without any fetch, issue, grant or completion before a run is
/// declared deadlocked.
const DEADLOCK_WINDOW: u64 = 20_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Fault {
    #[error("PC outside the text segment")]
    PcOutOfText,
    #[error("IPDOM stack overflow")]
    IpdomOverflow,
    #[error("join without a matching split")]
    JoinWithoutSplit,
    #[error("control instruction at a hardware loop end")]
    ControlAtLoopEnd,
    #[error("CSR {0:#05x} is read-only")]
    ReadOnlyCsr(u16),
    #[error(transparent)]
    Cfm(#[from] CfmError),
    #[error(transparent)]
    Csr(#[from] CsrError),
    #[error(transparent)]
    Dmsl(#[from] DmslError),
    #[error(transparent)]
    Mem(#[from] MemError),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot load kernel: {0}")]
    Load(String),
    #[error("cycle {cycle}, warp {warp}, pc {pc:#x}: {fault}")]
    Fault { cycle: u64, warp: usize, pc: u32, fault: Fault },
    #[error("no progress for {idle} cycles at cycle {cycle} ({state})")]
    Deadlock { cycle: u64, idle: u64, state: String },
    #[error("cycle limit {0} exceeded")]
    CycleLimit(u64),
    #[error("kernel rejected: {0}")]
    Lint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Fetch,
    Issue,
    Retire,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub warp: usize,
    pub pc: u32,
    pub mask: u32,
    pub kind: TraceKind,
    pub category: Category,
}

/// Why the head of a warp's instruction buffer could not issue.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Scoreboard,
    DmslData,
    DmslSpace,
    LsuFull,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Completion {
    at: u64,
    seq: u64,
    warp: usize,
    pc: u32,
    reg: Option<Reg>,
    lsu: bool,
    category: Category,
}

#[derive(Clone, Debug)]
struct LsuOp {
    warp: usize,
    pc: u32,
    dest: Option<Reg>,
    write: bool,
    lines: VecDeque<u32>,
    ready_at: u64,
    category: Category,
}

pub struct Core {
    cfg: CoreConfig,
    program: Vec<Instruction>,
    entry_pc: u32,
    warps: Vec<Warp>,
    regs: Vec<u32>,
    sb: Scoreboard,
    cfm: Option<Cfm>,
    dmsl: Option<Dmsl>,
    mem: MemSys,
    lsu: VecDeque<LsuOp>,
    lsu_pending: usize,
    events: BinaryHeap<Reverse<Completion>>,
    seq: u64,
    cycle: u64,
    last_fetch: usize,
    last_issue: usize,
    barriers: BTreeMap<u32, u32>,
    stats: RunStats,
    trace: Option<Vec<TraceEvent>>,
    last_progress: u64,
    full_mask: u32,
}

fn lanes(mask: u32, threads: usize) -> impl Iterator<Item = usize> {
    (0..threads).filter(move |t| mask >> t & 1 != 0)
}

fn first_lane(mask: u32) -> Option<usize> {
    (mask != 0).then(|| mask.trailing_zeros() as usize)
}

impl Core {
    pub fn new(cfg: CoreConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let w = cfg.num_warps;
        let t = cfg.num_threads;
        let ext = cfg.extensions;
        Ok(Core {
            program: Vec::new(),
            entry_pc: crate::isa::TEXT_BASE,
            warps: vec![Warp::default(); w],
            regs: vec![0; w * t * 64],
            sb: Scoreboard::new(w),
            cfm: ext.cfm.then(|| Cfm::new(cfg.loop_levels, w, cfg.full_mask(), ext.lps)),
            dmsl: ext.dmsl.then(|| Dmsl::new(cfg.num_dmsl, w, t, cfg.fifo_credits)),
            mem: MemSys::new(&cfg),
            lsu: VecDeque::new(),
            lsu_pending: 0,
            events: BinaryHeap::new(),
            seq: 0,
            cycle: 0,
            last_fetch: w - 1,
            last_issue: w - 1,
            barriers: BTreeMap::new(),
            stats: RunStats::new(w, t),
            trace: None,
            last_progress: 0,
            full_mask: cfg.full_mask(),
            cfg,
        })
    }

    pub fn config(&self) -> &CoreConfig {
        &self.cfg
    }

    /// Decodes the text segment and copies data segments into memory.
    pub fn load(&mut self, image: &KernelImage) -> Result<(), SimError> {
        let mut program = Vec::with_capacity(image.text.len());
        for (k, &word) in image.text.iter().enumerate() {
            let mut ins = decode(word).map_err(|e| SimError::Load(format!("text[{k}]: {e}")))?;
            if let Some(c) = image.categories.get(k) {
                ins.category = *c;
            }
            program.push(ins);
        }
        for (base, bytes) in &image.data_segments {
            self.mem.mem.write_bytes(*base, bytes).map_err(|e| SimError::Load(e.to_string()))?;
        }
        if !image.entry_pc.is_multiple_of(4) || !image.contains_pc(image.entry_pc) {
            return Err(SimError::Load(format!("entry {:#x} outside text", image.entry_pc)));
        }
        self.program = program;
        self.entry_pc = image.entry_pc;
        Ok(())
    }

    /// Activates warps `0..n` at the entry PC with all threads on.
    pub fn launch(&mut self, n: usize) {
        let (pc, mask) = (self.entry_pc, self.full_mask);
        for w in self.warps.iter_mut().take(n) {
            w.activate(pc, mask);
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.take().unwrap_or_default()
    }

    pub fn enable_arbiter_trace(&mut self) {
        self.mem.enable_trace();
    }

    pub fn memsys(&self) -> &MemSys {
        &self.mem
    }

    pub fn memsys_mut(&mut self) -> &mut MemSys {
        &mut self.mem
    }

    pub fn memory(&self) -> &Memory {
        &self.mem.mem
    }

    pub fn memory_mut(&mut self) -> &mut Memory {
        &mut self.mem.mem
    }

    pub fn cfm(&self) -> Option<&Cfm> {
        self.cfm.as_ref()
    }

    pub fn dmsl(&self) -> Option<&Dmsl> {
        self.dmsl.as_ref()
    }

    pub fn warp(&self, w: usize) -> &Warp {
        &self.warps[w]
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn stats(&self) -> RunStats {
        let mut s = self.stats.clone();
        s.cycles = self.cycle;
        s.mem = self.mem.stats.clone();
        if let Some(d) = &self.dmsl {
            s.dmsl = d.stats.clone();
        }
        s
    }

    fn reg_index(&self, warp: usize, thread: usize, reg: Reg) -> usize {
        (warp * self.cfg.num_threads + thread) * 64 + (reg.space as usize) * 32 + reg.index as usize
    }

    pub fn reg(&self, warp: usize, thread: usize, reg: Reg) -> u32 {
        if reg.is_zero() {
            return 0;
        }
        self.regs[self.reg_index(warp, thread, reg)]
    }

    pub fn set_reg(&mut self, warp: usize, thread: usize, reg: Reg, v: u32) {
        if !reg.is_zero() {
            let i = self.reg_index(warp, thread, reg);
            self.regs[i] = v;
        }
    }

    /// Kernel finished: no active warp, nothing in flight, write streams
    /// drained.
    pub fn done(&self) -> bool {
        self.warps.iter().all(|w| !w.active && w.ibuf.is_empty())
            && self.events.is_empty()
            && self.lsu.is_empty()
            && self.lsu_pending == 0
            && self.dmsl.as_ref().is_none_or(|d| d.drained() && d.reads_settled())
    }

    /// Runs until [`Core::done`] and returns the collected statistics.
    pub fn run(&mut self) -> Result<RunStats, SimError> {
        while !self.done() {
            if self.cycle >= self.cfg.max_cycles {
                return Err(SimError::CycleLimit(self.cfg.max_cycles));
            }
            self.tick()?;
        }
        Ok(self.stats())
    }

    /// Round-robin fetch selection starting after the last fetched warp.
    pub fn schedule_warp(&self) -> Option<usize> {
        let n = self.warps.len();
        (1..=n)
            .map(|k| (self.last_fetch + k) % n)
            .find(|&w| self.warps[w].can_fetch(self.cfg.ibuffer_depth))
    }

    pub fn tick(&mut self) -> Result<(), SimError> {
        let now = self.cycle;
        let mut progress = self.writeback(now);
        if let Some(d) = self.dmsl.as_mut() {
            d.deliver(now);
        }
        progress |= self.issue_stage(now)?;
        progress |= self.fetch_stage(now)?;
        progress |= self.memory_stage(now)?;
        self.cycle += 1;
        self.stats.cycles = self.cycle;
        if progress || self.events.peek().is_some() {
            self.last_progress = now;
        } else if now - self.last_progress > DEADLOCK_WINDOW && !self.done() {
            return Err(SimError::Deadlock { cycle: now, idle: now - self.last_progress, state: self.describe() });
        }
        Ok(())
    }

    fn describe(&self) -> String {
        let active: Vec<usize> = (0..self.warps.len()).filter(|&w| self.warps[w].active).collect();
        let heads: Vec<String> = self
            .warps
            .iter()
            .enumerate()
            .filter_map(|(w, wp)| wp.ibuf.front().map(|f| format!("w{w}@{:#x}:{}", f.pc, f.instr)))
            .collect();
        format!(
            "active warps {active:?}, heads [{}], lsu {}, drained {}",
            heads.join(", "),
            self.lsu.len(),
            self.dmsl.as_ref().is_none_or(|d| d.drained())
        )
    }

    fn fault(&self, warp: usize, pc: u32, fault: impl Into<Fault>) -> SimError {
        SimError::Fault { cycle: self.cycle, warp, pc, fault: fault.into() }
    }

    fn record(&mut self, kind: TraceKind, warp: usize, pc: u32, mask: u32, category: Category) {
        let cycle = self.cycle;
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent { cycle, warp, pc, mask, kind, category });
        }
    }

    fn schedule_completion(&mut self, c: Completion) {
        self.seq += 1;
        self.events.push(Reverse(Completion { seq: self.seq, ..c }));
    }

    fn writeback(&mut self, now: u64) -> bool {
        let mut any = false;
        while self.events.peek().is_some_and(|Reverse(c)| c.at <= now) {
            let Reverse(c) = self.events.pop().unwrap();
            if let Some(r) = c.reg {
                self.sb.release(c.warp, r);
            }
            if c.lsu {
                self.lsu_pending -= 1;
            }
            self.record(TraceKind::Retire, c.warp, c.pc, 0, c.category);
            any = true;
        }
        any
    }

    /// Accesses to the loop controller reconfigure fetch behaviour, so the
    /// warp's fetch waits for them like for control flow.
    fn serializes(ins: &Instruction) -> bool {
        ins.op.is_control() || (ins.op.is_csr() && ins.csr & 0xFC0 == csr::EXT_BASE)
    }

    fn fetch_stage(&mut self, now: u64) -> Result<bool, SimError> {
        let Some(w) = self.schedule_warp() else { return Ok(false) };
        self.last_fetch = w;
        let pc = self.warps[w].pc;
        let idx = match pc.checked_sub(crate::isa::TEXT_BASE) {
            Some(off) if pc.is_multiple_of(4) && ((off / 4) as usize) < self.program.len() => (off / 4) as usize,
            _ => return Err(self.fault(w, pc, Fault::PcOutOfText)),
        };
        let ins = self.program[idx];
        let fetch_mask = self.warps[w].tmask;
        let depth = self.warps[w].ipdom.len();
        let (mask, next) = match self.cfm.as_mut() {
            Some(c) => match c.step(w, pc, fetch_mask, depth) {
                Ok(o) => (o.mask, o.next_pc),
                Err(e) => return Err(self.fault(w, pc, e)),
            },
            None => (fetch_mask, None),
        };
        let warp = &mut self.warps[w];
        if Self::serializes(&ins) {
            if next.is_some() {
                return Err(self.fault(w, pc, Fault::ControlAtLoopEnd));
            }
            warp.fetch_stalled = true;
        } else {
            warp.pc = next.unwrap_or(pc.wrapping_add(4));
        }
        warp.ibuf.push_back(Fetched { pc, instr: ins, mask });
        self.stats.fetches += 1;
        let _ = now;
        self.record(TraceKind::Fetch, w, pc, mask, ins.category);
        Ok(true)
    }

    fn issue_check(&self, w: usize) -> Result<(), Block> {
        let f = self.warps[w].ibuf.front().expect("issue_check on empty buffer");
        let ins = &f.instr;
        if ins.op.unit() == Unit::Lsu && self.lsu.len() >= self.cfg.lsu_queue_depth {
            return Err(Block::LsuFull);
        }
        for src in ins.sources() {
            match self.dmsl.as_ref().and_then(|d| d.read_unit(w, src).map(|u| (d, u))) {
                Some((d, u)) => {
                    if !d.has_data(u, w, f.mask) {
                        return Err(Block::DmslData);
                    }
                }
                None => {
                    if self.sb.is_busy(w, src) {
                        return Err(Block::Scoreboard);
                    }
                }
            }
        }
        if let Some(dst) = ins.dest() {
            match self.dmsl.as_ref().and_then(|d| d.write_unit(w, dst).map(|u| (d, u))) {
                Some((d, u)) => {
                    if !d.has_space(u, w, f.mask) {
                        return Err(Block::DmslSpace);
                    }
                }
                None => {
                    if self.sb.is_busy(w, dst) {
                        return Err(Block::Scoreboard);
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether the head of `warp`'s buffer may issue this cycle.
    pub fn can_issue(&self, warp: usize) -> Option<Result<(), Block>> {
        self.warps[warp].ibuf.front().map(|_| self.issue_check(warp))
    }

    fn issue_stage(&mut self, now: u64) -> Result<bool, SimError> {
        let n = self.warps.len();
        let mut blocked = None;
        for k in 1..=n {
            let w = (self.last_issue + k) % n;
            if self.warps[w].ibuf.is_empty() {
                continue;
            }
            match self.issue_check(w) {
                Ok(()) => {
                    self.last_issue = w;
                    let f = self.warps[w].ibuf.pop_front().unwrap();
                    self.execute(w, f, now)?;
                    return Ok(true);
                }
                Err(b) => {
                    blocked.get_or_insert(b);
                }
            }
        }
        self.stats.idle_cycles += 1;
        match blocked {
            Some(Block::Scoreboard) => self.stats.stall_scoreboard += 1,
            Some(Block::DmslData) => self.stats.stall_dmsl_data += 1,
            Some(Block::DmslSpace) => self.stats.stall_dmsl_space += 1,
            Some(Block::LsuFull) => self.stats.stall_lsu_full += 1,
            None => {}
        }
        Ok(false)
    }

    /// Source operand lanes, popping redirected streams once per register.
    fn operand(
        &mut self,
        w: usize,
        space: Option<RegSpace>,
        index: u8,
        mask: u32,
        pc: u32,
        popped: &mut Vec<(Reg, Vec<u32>)>,
    ) -> Result<Vec<u32>, SimError> {
        let t = self.cfg.num_threads;
        let Some(space) = space else { return Ok(vec![0; t]) };
        let reg = Reg { space, index };
        if reg.is_zero() {
            return Ok(vec![0; t]);
        }
        if let Some((_, v)) = popped.iter().find(|(r, _)| *r == reg) {
            return Ok(v.clone());
        }
        if let Some(u) = self.dmsl.as_ref().and_then(|d| d.read_unit(w, reg)) {
            let v = self.dmsl.as_mut().unwrap().pop(u, w, mask).map_err(|e| self.fault(w, pc, e))?;
            popped.push((reg, v.clone()));
            return Ok(v);
        }
        Ok((0..t).map(|th| self.reg(w, th, reg)).collect())
    }

    fn write_dest(
        &mut self,
        w: usize,
        f: &Fetched,
        values: &[u32],
        latency: u64,
        now: u64,
    ) -> Result<(), SimError> {
        let Some(dst) = f.instr.dest() else { return Ok(()) };
        if let Some(u) = self.dmsl.as_ref().and_then(|d| d.write_unit(w, dst)) {
            self.dmsl
                .as_mut()
                .unwrap()
                .push(u, w, f.mask, values, now + latency)
                .map_err(|e| self.fault(w, f.pc, e))?;
            return Ok(());
        }
        for th in lanes(f.mask, self.cfg.num_threads) {
            self.set_reg(w, th, dst, values[th]);
        }
        self.sb.reserve(w, dst);
        self.schedule_completion(Completion {
            at: now + latency,
            seq: 0,
            warp: w,
            pc: f.pc,
            reg: Some(dst),
            lsu: false,
            category: f.instr.category,
        });
        Ok(())
    }

    fn execute(&mut self, w: usize, f: Fetched, now: u64) -> Result<(), SimError> {
        let ins = f.instr;
        let mask = f.mask;
        let t = self.cfg.num_threads;
        self.stats.instr[ins.category.index()] += 1;
        self.stats.instr_total += 1;
        self.stats.issued_per_warp[w] += 1;
        self.stats.flops += ins.op.flops() * mask.count_ones() as u64;
        self.record(TraceKind::Issue, w, f.pc, mask, ins.category);

        let spec = encoding::spec_of(ins.op);
        let mut popped = Vec::new();
        let a = self.operand(w, spec.rs1_space, ins.rs1, mask, f.pc, &mut popped)?;
        let b = self.operand(w, spec.rs2_space, ins.rs2, mask, f.pc, &mut popped)?;
        let c = self.operand(w, spec.rs3_space, ins.rs3, mask, f.pc, &mut popped)?;

        match ins.op.unit() {
            Unit::Lsu => self.exec_lsu(w, &f, &a, &b, now),
            Unit::Csr => self.exec_csr(w, &f, &a, now),
            Unit::Fpu => {
                let mut out = vec![0; t];
                for th in lanes(mask, t) {
                    out[th] = exec::fpu(ins.op, a[th], b[th], c[th]);
                }
                self.write_dest(w, &f, &out, self.cfg.fpu_latency, now)
            }
            Unit::Alu if ins.op.is_control() => self.exec_control(w, &f, &a, &b, now),
            Unit::Alu => {
                let mut out = vec![0; t];
                for th in lanes(mask, t) {
                    out[th] = exec::alu(ins.op, a[th], b[th], ins.imm, f.pc);
                }
                self.write_dest(w, &f, &out, self.cfg.alu_latency, now)
            }
        }
    }

    fn exec_lsu(&mut self, w: usize, f: &Fetched, a: &[u32], b: &[u32], now: u64) -> Result<(), SimError> {
        let ins = f.instr;
        let t = self.cfg.num_threads;
        let (width, signed) = exec::mem_width(ins.op);
        let write = matches!(ins.op, Op::Sb | Op::Sh | Op::Sw | Op::Fsw);
        let mut lines: VecDeque<u32> = VecDeque::new();
        let mut shared = false;
        let mut out = vec![0; t];
        for th in lanes(f.mask, t) {
            let addr = a[th].wrapping_add(ins.imm as u32);
            let r = if write {
                self.mem.mem.store(addr, width, b[th])
            } else {
                self.mem.mem.load(addr, width).map(|v| out[th] = exec::extend(v, width, signed))
            };
            r.map_err(|e| self.fault(w, f.pc, e))?;
            if Memory::is_shared(addr) {
                shared = true;
            } else {
                let line = self.mem.line_of(addr);
                if !lines.contains(&line) {
                    lines.push_back(line);
                }
            }
        }
        let dest = if write { None } else { f.instr.dest() };
        if let Some(dst) = dest {
            if let Some(u) = self.dmsl.as_ref().and_then(|d| d.write_unit(w, dst)) {
                let ready = now + self.cfg.miss_latency;
                self.dmsl.as_mut().unwrap().push(u, w, f.mask, &out, ready).map_err(|e| self.fault(w, f.pc, e))?;
            } else {
                for th in lanes(f.mask, t) {
                    self.set_reg(w, th, dst, out[th]);
                }
                self.sb.reserve(w, dst);
            }
        }
        let dest = dest.filter(|d| self.sb.is_busy(w, *d));
        let base_ready = if shared { self.mem.shared_access(now) } else { now + 1 };
        self.lsu_pending += 1;
        let op = LsuOp { warp: w, pc: f.pc, dest, write, lines, ready_at: base_ready, category: f.instr.category };
        if op.lines.is_empty() {
            self.schedule_completion(Completion {
                at: op.ready_at,
                seq: 0,
                warp: w,
                pc: f.pc,
                reg: op.dest,
                lsu: true,
                category: op.category,
            });
        } else {
            self.lsu.push_back(op);
        }
        Ok(())
    }

    fn exec_csr(&mut self, w: usize, f: &Fetched, a: &[u32], now: u64) -> Result<(), SimError> {
        let ins = f.instr;
        let t = self.cfg.num_threads;
        let (levels, units) = (
            if self.cfm.is_some() { self.cfg.loop_levels } else { 0 },
            if self.dmsl.is_some() { self.cfg.num_dmsl } else { 0 },
        );
        let target = csr::lookup(ins.csr, levels, units).map_err(|e| self.fault(w, f.pc, e))?;
        let (src, write, op) = match ins.op {
            Op::Csrrw => (a.to_vec(), true, CsrOp::Write),
            Op::Csrrs => (a.to_vec(), ins.rs1 != 0, CsrOp::Set),
            Op::Csrrc => (a.to_vec(), ins.rs1 != 0, CsrOp::Clear),
            Op::Csrrwi => (vec![ins.imm as u32; t], true, CsrOp::Write),
            Op::Csrrsi => (vec![ins.imm as u32; t], ins.imm != 0, CsrOp::Set),
            _ => (vec![ins.imm as u32; t], ins.imm != 0, CsrOp::Clear),
        };
        if write && target.is_read_only() {
            return Err(self.fault(w, f.pc, Fault::ReadOnlyCsr(ins.csr)));
        }
        let old: Vec<u32> = match target {
            CsrTarget::ThreadId => (0..t as u32).collect(),
            CsrTarget::WarpId => vec![w as u32; t],
            CsrTarget::ThreadMask => vec![self.warps[w].tmask; t],
            CsrTarget::NumThreads => vec![t as u32; t],
            CsrTarget::NumWarps => vec![self.cfg.num_warps as u32; t],
            CsrTarget::Ext(addr) => match addr.unit_type {
                UnitType::Cfm => {
                    let cfm = self.cfm.as_mut().unwrap();
                    let level = addr.unit_id as usize;
                    let cur = cfm.read(w, level, addr.reg).map_err(Fault::from);
                    let cur = match cur {
                        Ok(v) => v,
                        Err(e) => return Err(self.fault(w, f.pc, e)),
                    };
                    if let (true, Some(l)) = (write, first_lane(f.mask)) {
                        let new = op.apply(cur, src[l]);
                        if let Err(e) = self.cfm.as_mut().unwrap().configure(w, level, addr.reg, new) {
                            return Err(self.fault(w, f.pc, e));
                        }
                    }
                    vec![cur; t]
                }
                UnitType::Dmsl => {
                    let r = self.dmsl.as_mut().unwrap().csr_access(
                        addr.unit_id as usize,
                        w,
                        addr.reg,
                        op,
                        &src,
                        f.mask,
                        write,
                    );
                    r.map_err(|e| self.fault(w, f.pc, e))?
                }
            },
        };
        if Self::serializes(&ins) {
            let warp = &mut self.warps[w];
            warp.pc = f.pc.wrapping_add(4);
            warp.fetch_stalled = false;
        }
        self.write_dest(w, f, &old, self.cfg.csr_latency, now)
    }

    fn exec_control(&mut self, w: usize, f: &Fetched, a: &[u32], b: &[u32], now: u64) -> Result<(), SimError> {
        let ins = f.instr;
        let pc = f.pc;
        let t = self.cfg.num_threads;
        let lead = first_lane(f.mask);
        let next = pc.wrapping_add(4);
        let mut new_pc = next;
        match ins.op {
            Op::Jal => new_pc = pc.wrapping_add(ins.imm as u32),
            Op::Jalr => {
                let base = lead.map_or(0, |l| a[l]);
                new_pc = base.wrapping_add(ins.imm as u32) & !1;
            }
            op if op.is_branch() => {
                if lead.is_some_and(|l| exec::taken(op, a[l], b[l])) {
                    new_pc = pc.wrapping_add(ins.imm as u32);
                }
            }
            Op::Tmc => {
                if let Some(l) = lead {
                    let m = a[l] & self.full_mask;
                    self.warps[w].tmask = m;
                    if m == 0 {
                        self.warps[w].active = false;
                    }
                }
            }
            Op::Wspawn => {
                let count = lead.map_or(0, |l| a[l] as usize).min(self.warps.len());
                let target = lead.map_or(0, |l| b[l]);
                for other in 1..count {
                    if !self.warps[other].active {
                        self.warps[other].activate(target, self.full_mask);
                    }
                }
            }
            Op::Split => {
                let depth = self.warps[w].ipdom.len();
                if depth >= self.cfg.ipdom_depth {
                    return Err(self.fault(w, pc, Fault::IpdomOverflow));
                }
                let pred = lanes(f.mask, t).filter(|&th| a[th] != 0).fold(0u32, |m, th| m | 1 << th);
                let taken = f.mask & pred;
                let els = f.mask & !pred;
                let else_pc = pc.wrapping_add(ins.imm as u32);
                let warp = &mut self.warps[w];
                let saved = warp.tmask;
                let mut entry = IpdomEntry { saved_mask: saved, else_mask: 0, else_pc, else_pending: false };
                if taken == 0 {
                    new_pc = else_pc;
                } else if els != 0 {
                    entry.else_mask = saved & !taken;
                    entry.else_pending = true;
                    warp.tmask = saved & !els;
                }
                warp.ipdom.push(entry);
            }
            Op::Join => {
                let warp = &mut self.warps[w];
                let Some(top) = warp.ipdom.last_mut() else {
                    return Err(self.fault(w, pc, Fault::JoinWithoutSplit));
                };
                if top.else_pending {
                    top.else_pending = false;
                    warp.tmask = top.else_mask;
                    new_pc = top.else_pc;
                } else {
                    warp.tmask = top.saved_mask;
                    warp.ipdom.pop();
                    new_pc = pc.wrapping_add(ins.imm as u32);
                }
            }
            Op::Bar => {
                let id = lead.map_or(0, |l| a[l]);
                let count = lead.map_or(1, |l| b[l]).max(1);
                let arrived = self.barriers.entry(id).or_insert(0);
                *arrived |= 1 << w;
                if arrived.count_ones() >= count {
                    let released = self.barriers.remove(&id).unwrap();
                    for o in 0..self.warps.len() {
                        if released >> o & 1 != 0 {
                            self.warps[o].barrier_wait = false;
                        }
                    }
                } else {
                    self.warps[w].barrier_wait = true;
                }
            }
            _ => unreachable!("{:?} is not a control op", ins.op),
        }
        let warp = &mut self.warps[w];
        warp.pc = new_pc;
        warp.fetch_stalled = false;
        if matches!(ins.op, Op::Jal | Op::Jalr) {
            self.write_dest(w, f, &vec![next; t], self.cfg.alu_latency, now)?;
        }
        Ok(())
    }

    fn memory_stage(&mut self, now: u64) -> Result<bool, SimError> {
        let mut reqs: Vec<LineRequest> = Vec::new();
        if let Some(op) = self.lsu.front() {
            reqs.push(LineRequest {
                origin: Origin::Lsu,
                warp: op.warp,
                line_addr: op.lines[0],
                write: op.write,
                need: 0,
            });
        }
        let lsu_reqs = reqs.len();
        let line_mask = !(self.mem.line_size() - 1);
        let proposals = match self.dmsl.as_ref() {
            Some(d) => d.propose(now, &|a| a & line_mask),
            None => Vec::new(),
        };
        reqs.extend(proposals.iter().map(|p| p.request));
        if reqs.is_empty() {
            return Ok(false);
        }
        let grants = self.mem.arbitrate(&reqs, now);
        for g in &grants {
            if g.request < lsu_reqs {
                let op = self.lsu.front_mut().unwrap();
                op.lines.pop_front();
                if !op.write {
                    op.ready_at = op.ready_at.max(g.ready_at);
                }
                if op.lines.is_empty() {
                    let op = self.lsu.pop_front().unwrap();
                    self.schedule_completion(Completion {
                        at: op.ready_at.max(now + 1),
                        seq: 0,
                        warp: op.warp,
                        pc: op.pc,
                        reg: op.dest,
                        lsu: true,
                        category: op.category,
                    });
                }
            } else {
                let p = proposals[g.request - lsu_reqs];
                let d = self.dmsl.as_mut().unwrap();
                if let Err(e) = d.grant(&p, g.ready_at, &mut self.mem.mem) {
                    return Err(SimError::Fault { cycle: now, warp: p.warp, pc: 0, fault: e.into() });
                }
            }
        }
        Ok(!grants.is_empty())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Extensions;
    use crate::isa::assemble;

    fn core_with(src: &str, cfg: CoreConfig, warps: usize) -> Core {
        let img = assemble(src).unwrap();
        let mut c = Core::new(cfg).unwrap();
        c.load(&img).unwrap();
        c.launch(warps);
        c
    }

    fn small() -> CoreConfig {
        CoreConfig { num_warps: 2, num_threads: 4, extensions: Extensions::NONE, ..Default::default() }
    }

    #[test]
    fn empty_machine_only_counts_cycles() {
        let mut c = core_with("tmc zero", small(), 0);
        for _ in 0..5 {
            c.tick().unwrap();
        }
        assert_eq!(c.cycle(), 5);
        assert_eq!(c.stats().instr_total, 0);
        assert!(c.done());
    }

    #[test]
    fn addi_retires_after_alu_latency() {
        let cfg = CoreConfig { alu_latency: 3, ..small() };
        let mut c = core_with("addi a0, zero, 7\nadd a1, a0, a0\ntmc zero", cfg, 1);
        c.enable_trace();
        let s = c.run().unwrap();
        assert_eq!(c.reg(0, 2, Reg::int(11)), 14);
        assert_eq!(s.instr_total, 3);
        let tr = c.take_trace();
        let issue = |pc| tr.iter().find(|e| e.kind == TraceKind::Issue && e.pc == pc).unwrap().cycle;
        let retire = tr.iter().find(|e| e.kind == TraceKind::Retire && e.pc == 0x1000).unwrap().cycle;
        assert_eq!(retire, issue(0x1000) + 3);
        // dependent add waits for the writeback
        assert!(issue(0x1004) >= retire);
    }

    #[test]
    fn round_robin_skips_blocked_warp() {
        let src = "csrr t0, wid\nbnez t0, other\nfadd.s f1, f2, f3\nfadd.s f4, f1, f1\ntmc zero\nother: addi t1, zero, 1\naddi t2, zero, 2\ntmc zero";
        let cfg = CoreConfig { fpu_latency: 20, ..small() };
        let mut c = core_with(src, cfg, 2);
        c.enable_trace();
        c.run().unwrap();
        let tr = c.take_trace();
        let issued: Vec<(u64, usize)> =
            tr.iter().filter(|e| e.kind == TraceKind::Issue).map(|e| (e.cycle, e.warp)).collect();
        let dep = tr.iter().find(|e| e.kind == TraceKind::Issue && e.pc == 0x100c).unwrap().cycle;
        let first = tr.iter().find(|e| e.kind == TraceKind::Issue && e.pc == 0x1008).unwrap().cycle;
        assert!(dep >= first + 20);
        assert!(issued.iter().any(|&(cy, w)| w == 1 && cy > first && cy < dep));
    }

    #[test]
    fn schedule_is_round_robin() {
        let mut c = core_with("nop\nnop\ntmc zero", CoreConfig { num_warps: 3, ..small() }, 3);
        c.warps[1].active = false;
        c.last_fetch = 0;
        assert_eq!(c.schedule_warp(), Some(2));
        c.last_fetch = 2;
        assert_eq!(c.schedule_warp(), Some(0));
    }

    #[test]
    fn tmc_zero_deactivates() {
        let mut c = core_with("tmc zero", small(), 1);
        c.run().unwrap();
        assert!(!c.warp(0).active);
    }

    #[test]
    fn divergent_split_runs_both_paths() {
        // threads 0,1 take the then-path, 2,3 the else-path
        let src = "
            csrr t0, tid
            slti t1, t0, 2
            split t1, els
            addi a0, zero, 10
            join done
        els:
            addi a0, zero, 20
            join done
        done:
            addi a1, a0, 1
            tmc zero";
        let mut c = core_with(src, small(), 1);
        c.run().unwrap();
        let got: Vec<u32> = (0..4).map(|t| c.reg(0, t, Reg::int(11))).collect();
        assert_eq!(got, vec![11, 11, 21, 21]);
        assert_eq!(c.warp(0).tmask, 0);
        assert!(c.warp(0).ipdom.is_empty());
    }

    #[test]
    fn uniform_split_skips_else() {
        let src = "
            addi t1, zero, 1
            split t1, els
            addi a0, zero, 10
            join done
        els:
            addi a0, zero, 20
            join done
        done:
            tmc zero";
        let mut c = core_with(src, small(), 1);
        c.enable_trace();
        let s = c.run().unwrap();
        assert_eq!(c.reg(0, 3, Reg::int(10)), 10);
        assert_eq!(s.instr_total, 5);
    }

    #[test]
    fn loads_and_stores_move_data() {
        let src = "
            csrr t0, tid
            slli t0, t0, 2
            la t1, buf
            add t1, t1, t0
            lw a0, 0(t1)
            addi a0, a0, 1
            sw a0, 16(t1)
            tmc zero
            .data
        buf: .word 1, 2, 3, 4
            .space 16";
        let mut c = core_with(src, small(), 1);
        c.run().unwrap();
        let base = assemble(src).unwrap().symbol("buf").unwrap();
        assert_eq!(c.memory().read_u32s(base + 16, 4).unwrap(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn out_of_range_load_faults() {
        let mut c = core_with("lui t0, 0x7f000\nlw a0, 0(t0)\ntmc zero", small(), 1);
        assert!(matches!(c.run(), Err(SimError::Fault { fault: Fault::Mem(_), .. })));
    }

    #[test]
    fn runs_are_deterministic() {
        let src = "csrr t0, tid\nfmv.w.x f1, t0\nfadd.s f2, f1, f1\nfmul.s f3, f2, f2\ntmc zero";
        let a = core_with(src, small(), 2).run().unwrap();
        let b = core_with(src, small(), 2).run().unwrap();
        assert_eq!(a, b);
    }
}
