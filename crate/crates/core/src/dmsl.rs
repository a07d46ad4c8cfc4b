//! Decoupled memory streaming lanes.
//!
//! Every unit keeps, per warp and per thread, a linear address stream
//! `base + i * stride` for `i < count`, a read FIFO fed by non-speculative
//! prefetches and a write FIFO drained to memory in the background. The
//! issue stage reads mapped source registers from the read FIFO and pushes
//! mapped destination values into the write FIFO instead of the register
//! file.

use crate::csr::{CsrOp, StreamCfg, StreamMode, DMSL_REG_BASE, DMSL_REG_CFG, DMSL_REG_COUNT, DMSL_REG_STRIDE};
use crate::isa::Reg;
use crate::memsys::{LineRequest, MemError, Memory, Origin};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DmslError {
    #[error("stream register {0} does not exist")]
    InvalidRegId(u8),
    #[error("stream {unit} of warp {warp} reconfigured while active")]
    ReconfigureWhileActive { unit: usize, warp: usize },
    #[error("stream {unit} thread {thread}: stride {stride} invalid for {bytes}-byte elements")]
    BadStride { unit: usize, thread: usize, stride: i32, bytes: u32 },
    #[error("stream {unit} of warp {warp}: read FIFO underflow")]
    Underflow { unit: usize, warp: usize },
    #[error("stream {unit} of warp {warp}: write FIFO overflow")]
    Overflow { unit: usize, warp: usize },
    #[error(transparent)]
    Mem(#[from] MemError),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmslStats {
    pub line_requests: u64,
    pub elements_fetched: u64,
    pub elements_consumed: u64,
    pub elements_written: u64,
    pub elements_drained: u64,
    /// Thread elements that rode along on another thread's line request.
    pub merged_elements: u64,
}

#[derive(Clone, Debug, Default)]
struct Lane {
    base: u32,
    stride: i32,
    count: u32,
    requested: u32,
    consumed: u32,
    written: u32,
    in_flight: VecDeque<(u64, u32)>,
    fifo: VecDeque<u32>,
    /// (ready cycle, address, value)
    out: VecDeque<(u64, u32, u32)>,
}

impl Lane {
    fn addr(&self, i: u32) -> u32 {
        self.base.wrapping_add((i as i32).wrapping_mul(self.stride) as u32)
    }
}

#[derive(Clone, Debug, Default)]
struct WarpStream {
    cfg: Option<StreamCfg>,
    cfg_word: u32,
    lanes: Vec<Lane>,
}

impl WarpStream {
    fn active(&self) -> bool {
        let Some(cfg) = self.cfg else { return false };
        self.lanes.iter().any(|l| {
            !l.out.is_empty()
                || !l.in_flight.is_empty()
                || !l.fifo.is_empty()
                || (cfg.mode.reads() && l.consumed < l.count)
        })
    }
}

/// Byte range `[lo, hi)` touched by one configured stream of one warp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRange {
    pub unit: usize,
    pub warp: usize,
    pub mode: StreamMode,
    pub lo: u32,
    pub hi: u32,
}

/// First pair of a read range and a write range that share bytes. A
/// read-write stream is not compared with itself.
pub fn overlapping(ranges: &[StreamRange]) -> Option<(StreamRange, StreamRange)> {
    for (i, r) in ranges.iter().enumerate() {
        for (j, w) in ranges.iter().enumerate() {
            if i != j && r.mode.reads() && w.mode.writes() && r.lo < w.hi && w.lo < r.hi {
                return Some((*r, *w));
            }
        }
    }
    None
}

/// A line request proposed by one unit, remembered until it is granted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Proposal {
    pub unit: usize,
    pub warp: usize,
    pub write: bool,
    /// Threads whose next element lies in the requested line.
    pub threads: u32,
    pub request: LineRequest,
}

#[derive(Clone, Debug)]
pub struct Dmsl {
    units: Vec<Vec<WarpStream>>,
    credits: usize,
    threads: usize,
    ranges: Vec<StreamRange>,
    pub stats: DmslStats,
}

impl Dmsl {
    pub fn new(num_units: usize, num_warps: usize, num_threads: usize, credits: usize) -> Self {
        let ws = WarpStream { cfg: None, cfg_word: 0, lanes: vec![Lane::default(); num_threads] };
        Dmsl { units: vec![vec![ws; num_warps]; num_units], credits, threads: num_threads, ranges: Vec::new(), stats: DmslStats::default() }
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn credits(&self) -> usize {
        self.credits
    }

    /// Every stream configured so far, in configuration order.
    pub fn ranges(&self) -> &[StreamRange] {
        &self.ranges
    }

    pub fn config(&self, unit: usize, warp: usize) -> Option<StreamCfg> {
        self.units[unit][warp].cfg
    }

    pub fn occupancy(&self, unit: usize, warp: usize, thread: usize) -> usize {
        self.units[unit][warp].lanes[thread].fifo.len()
    }

    pub fn in_flight(&self, unit: usize, warp: usize, thread: usize) -> usize {
        self.units[unit][warp].lanes[thread].in_flight.len()
    }

    pub fn write_occupancy(&self, unit: usize, warp: usize, thread: usize) -> usize {
        self.units[unit][warp].lanes[thread].out.len()
    }

    /// Stream unit whose redirected read side serves `reg` for `warp`.
    pub fn read_unit(&self, warp: usize, reg: Reg) -> Option<usize> {
        self.units.iter().position(|u| {
            u[warp].cfg.is_some_and(|c| c.redirect && c.mode.reads() && c.reg == reg)
        })
    }

    /// Stream unit whose redirected write side captures `reg` for `warp`.
    pub fn write_unit(&self, warp: usize, reg: Reg) -> Option<usize> {
        self.units.iter().position(|u| {
            u[warp].cfg.is_some_and(|c| c.redirect && c.mode.writes() && c.reg == reg)
        })
    }

    fn lanes_in(mask: u32, threads: usize) -> impl Iterator<Item = usize> {
        (0..threads).filter(move |t| mask >> t & 1 != 0)
    }

    /// Read data present for every thread in `mask`.
    pub fn has_data(&self, unit: usize, warp: usize, mask: u32) -> bool {
        let ws = &self.units[unit][warp];
        Self::lanes_in(mask, self.threads).all(|t| !ws.lanes[t].fifo.is_empty())
    }

    /// Write FIFO space for every thread in `mask`.
    pub fn has_space(&self, unit: usize, warp: usize, mask: u32) -> bool {
        let ws = &self.units[unit][warp];
        Self::lanes_in(mask, self.threads).all(|t| ws.lanes[t].out.len() < self.credits)
    }

    /// Pops one element per thread in `mask`; other threads read as 0.
    pub fn pop(&mut self, unit: usize, warp: usize, mask: u32) -> Result<Vec<u32>, DmslError> {
        let mut vals = vec![0; self.threads];
        let ws = &mut self.units[unit][warp];
        for t in Self::lanes_in(mask, self.threads) {
            let lane = &mut ws.lanes[t];
            vals[t] = lane.fifo.pop_front().ok_or(DmslError::Underflow { unit, warp })?;
            lane.consumed += 1;
            self.stats.elements_consumed += 1;
        }
        Ok(vals)
    }

    /// Buffers one element per thread in `mask`, drainable from `ready_at`.
    pub fn push(
        &mut self,
        unit: usize,
        warp: usize,
        mask: u32,
        values: &[u32],
        ready_at: u64,
    ) -> Result<(), DmslError> {
        let credits = self.credits;
        let ws = &mut self.units[unit][warp];
        for t in Self::lanes_in(mask, self.threads) {
            let lane = &mut ws.lanes[t];
            if lane.out.len() >= credits {
                return Err(DmslError::Overflow { unit, warp });
            }
            let addr = lane.addr(lane.written);
            lane.out.push_back((ready_at, addr, values[t]));
            lane.written += 1;
            self.stats.elements_written += 1;
        }
        Ok(())
    }

    /// CSR access for `warp`. Per-thread registers apply `op` lane by lane
    /// for threads in `mask`; the config word takes the first active lane.
    /// Returns the previous per-lane values.
    #[allow(clippy::too_many_arguments)]
    pub fn csr_access(
        &mut self,
        unit: usize,
        warp: usize,
        reg: u8,
        op: CsrOp,
        values: &[u32],
        mask: u32,
        write: bool,
    ) -> Result<Vec<u32>, DmslError> {
        let threads = self.threads;
        let ws = &mut self.units[unit][warp];
        let old: Vec<u32> = match reg {
            DMSL_REG_BASE => ws.lanes.iter().map(|l| l.base).collect(),
            DMSL_REG_STRIDE => ws.lanes.iter().map(|l| l.stride as u32).collect(),
            DMSL_REG_COUNT => ws.lanes.iter().map(|l| l.count).collect(),
            DMSL_REG_CFG => vec![ws.cfg_word; threads],
            r => return Err(DmslError::InvalidRegId(r)),
        };
        if !write || mask == 0 {
            return Ok(old);
        }
        if ws.active() {
            return Err(DmslError::ReconfigureWhileActive { unit, warp });
        }
        if reg == DMSL_REG_CFG {
            let first = mask.trailing_zeros() as usize;
            let word = op.apply(ws.cfg_word, values[first]);
            let cfg = StreamCfg::unpack(word).map_err(|_| DmslError::InvalidRegId(reg))?;
            if let Some(c) = cfg {
                for (t, l) in ws.lanes.iter().enumerate().filter(|(_, l)| l.count > 0) {
                    let bad_write = c.mode.writes() && l.stride == 0;
                    if l.stride % c.elem_bytes as i32 != 0 || bad_write {
                        return Err(DmslError::BadStride { unit, thread: t, stride: l.stride, bytes: c.elem_bytes });
                    }
                }
            }
            if let Some(c) = cfg {
                let ends = ws.lanes.iter().filter(|l| l.count > 0).flat_map(|l| [l.addr(0), l.addr(l.count - 1)]);
                if let (Some(lo), Some(hi)) = (ends.clone().min(), ends.max()) {
                    self.ranges.push(StreamRange { unit, warp, mode: c.mode, lo, hi: hi + c.elem_bytes });
                }
            }
            ws.cfg_word = word;
            ws.cfg = cfg;
            for l in &mut ws.lanes {
                l.requested = 0;
                l.consumed = 0;
                l.written = 0;
            }
        } else {
            for t in Self::lanes_in(mask, threads) {
                let v = op.apply(old[t], values[t]);
                let l = &mut ws.lanes[t];
                match reg {
                    DMSL_REG_BASE => l.base = v,
                    DMSL_REG_STRIDE => l.stride = v as i32,
                    _ => l.count = v,
                }
            }
        }
        Ok(old)
    }

    /// Moves returned read data into the FIFOs, in request order.
    pub fn deliver(&mut self, now: u64) {
        for unit in &mut self.units {
            for ws in unit {
                for l in &mut ws.lanes {
                    while l.in_flight.front().is_some_and(|(t, _)| *t <= now) {
                        let (_, v) = l.in_flight.pop_front().unwrap();
                        l.fifo.push_back(v);
                    }
                }
            }
        }
    }

    fn read_candidate(&self, unit: usize, warp: usize, line_of: &dyn Fn(u32) -> u32) -> Option<Proposal> {
        let ws = &self.units[unit][warp];
        let cfg = ws.cfg?;
        if !cfg.mode.reads() {
            return None;
        }
        let free = |l: &Lane| self.credits - l.fifo.len() - l.in_flight.len();
        let eligible = |l: &Lane| {
            l.requested < l.count && free(l) > 0 && (cfg.prefetch || l.fifo.len() + l.in_flight.len() == 0)
        };
        let lead = (0..self.threads)
            .filter(|&t| eligible(&ws.lanes[t]))
            .max_by_key(|&t| (free(&ws.lanes[t]), std::cmp::Reverse(t)))?;
        let line = line_of(ws.lanes[lead].addr(ws.lanes[lead].requested));
        let threads = (0..self.threads)
            .filter(|&t| {
                let l = &ws.lanes[t];
                eligible(l) && line_of(l.addr(l.requested)) == line
            })
            .fold(0u32, |m, t| m | 1 << t);
        let need = free(&ws.lanes[lead]) as u32;
        Some(Proposal {
            unit,
            warp,
            write: false,
            threads,
            request: LineRequest { origin: Origin::Dmsl(unit as u8), warp, line_addr: line, write: false, need },
        })
    }

    fn write_candidate(&self, unit: usize, warp: usize, now: u64, line_of: &dyn Fn(u32) -> u32) -> Option<Proposal> {
        let ws = &self.units[unit][warp];
        let ready = |l: &Lane| l.out.front().is_some_and(|(t, _, _)| *t <= now);
        let lead = (0..self.threads)
            .filter(|&t| ready(&ws.lanes[t]))
            .max_by_key(|&t| (ws.lanes[t].out.len(), std::cmp::Reverse(t)))?;
        let line = line_of(ws.lanes[lead].out[0].1);
        let threads = (0..self.threads)
            .filter(|&t| {
                let l = &ws.lanes[t];
                ready(l) && line_of(l.out[0].1) == line
            })
            .fold(0u32, |m, t| m | 1 << t);
        let need = ws.lanes[lead].out.len() as u32;
        Some(Proposal {
            unit,
            warp,
            write: true,
            threads,
            request: LineRequest { origin: Origin::Dmsl(unit as u8), warp, line_addr: line, write: true, need },
        })
    }

    /// At most one line request per unit: the neediest warp's read or
    /// write side, ties to the read side and then to the lower warp.
    pub fn propose(&self, now: u64, line_of: &dyn Fn(u32) -> u32) -> Vec<Proposal> {
        let mut out = Vec::new();
        for unit in 0..self.units.len() {
            let mut best: Option<Proposal> = None;
            for warp in 0..self.units[unit].len() {
                for cand in [self.read_candidate(unit, warp, line_of), self.write_candidate(unit, warp, now, line_of)]
                    .into_iter()
                    .flatten()
                {
                    if best.is_none_or(|b| cand.request.need > b.request.need) {
                        best = Some(cand);
                    }
                }
            }
            out.extend(best);
        }
        out
    }

    /// Applies a granted proposal: reads capture memory now and arrive at
    /// `ready_at`; writes retire their elements to memory immediately.
    pub fn grant(&mut self, p: &Proposal, ready_at: u64, mem: &mut Memory) -> Result<(), DmslError> {
        let ws = &mut self.units[p.unit][p.warp];
        let bytes = ws.cfg.map_or(4, |c| c.elem_bytes);
        self.stats.line_requests += 1;
        self.stats.merged_elements += p.threads.count_ones().saturating_sub(1) as u64;
        for t in Self::lanes_in(p.threads, self.threads) {
            let l = &mut ws.lanes[t];
            if p.write {
                let (_, addr, v) = l.out.pop_front().expect("proposed write has data");
                mem.store(addr, bytes, v)?;
                self.stats.elements_drained += 1;
            } else {
                let v = mem.load(l.addr(l.requested), bytes)?;
                l.in_flight.push_back((ready_at, v));
                l.requested += 1;
                self.stats.elements_fetched += 1;
            }
        }
        Ok(())
    }

    /// All write FIFOs empty.
    pub fn drained(&self) -> bool {
        self.units.iter().flatten().flat_map(|ws| &ws.lanes).all(|l| l.out.is_empty())
    }

    /// Nothing in flight towards the read FIFOs.
    pub fn reads_settled(&self) -> bool {
        self.units.iter().flatten().flat_map(|ws| &ws.lanes).all(|l| l.in_flight.is_empty())
    }

    pub fn mode(&self, unit: usize, warp: usize) -> Option<StreamMode> {
        self.units[unit][warp].cfg.map(|c| c.mode)
    }

    /// Checks the credit bounds of every lane.
    pub fn check_credits(&self) -> Result<(), String> {
        for (u, unit) in self.units.iter().enumerate() {
            for (w, ws) in unit.iter().enumerate() {
                for (t, l) in ws.lanes.iter().enumerate() {
                    if l.fifo.len() + l.in_flight.len() > self.credits || l.out.len() > self.credits {
                        return Err(format!("unit {u} warp {w} thread {t} exceeds {} credits", self.credits));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::RegSpace;

    const T: usize = 4;

    fn cfg_word(mode: StreamMode, prefetch: bool) -> u32 {
        StreamCfg { reg: Reg { space: RegSpace::Fp, index: 1 }, elem_bytes: 4, prefetch, redirect: true, mode }.pack()
    }

    fn setup(credits: usize, bases: [u32; T], stride: i32, count: u32, mode: StreamMode) -> Dmsl {
        let mut d = Dmsl::new(1, 2, T, credits);
        let all = (1 << T) - 1;
        d.csr_access(0, 0, DMSL_REG_BASE, CsrOp::Write, &bases, all, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_STRIDE, CsrOp::Write, &[stride as u32; T], all, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_COUNT, CsrOp::Write, &[count; T], all, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_CFG, CsrOp::Write, &[cfg_word(mode, true); T], all, true).unwrap();
        d
    }

    fn mem_with(n: u32) -> Memory {
        let mut m = Memory::new(4096, 0);
        for i in 0..n {
            m.store(4 * i, 4, i).unwrap();
        }
        m
    }

    fn line16(a: u32) -> u32 {
        a & !15
    }

    fn run_reads(d: &mut Dmsl, mem: &mut Memory, cycles: u64) {
        for now in 0..cycles {
            d.deliver(now);
            for p in d.propose(now, &line16) {
                d.grant(&p, now + 1, mem).unwrap();
            }
        }
    }

    #[test]
    fn per_lane_linear_addresses() {
        let mut d = setup(8, [0x0, 0x4, 0x8, 0xC], 16, 3, StreamMode::Read);
        let mut mem = mem_with(64);
        run_reads(&mut d, &mut mem, 10);
        let mut seq = Vec::new();
        for _ in 0..3 {
            seq.push(d.pop(0, 0, 0xF).unwrap());
        }
        assert_eq!(seq[0], vec![0, 1, 2, 3]);
        assert_eq!(seq[1], vec![4, 5, 6, 7]);
        assert_eq!(seq[2], vec![8, 9, 10, 11]);
        // four same-line lanes travel in one request
        assert_eq!(d.stats.line_requests, 3);
    }

    #[test]
    fn credit_limit_stops_prefetch() {
        let mut d = setup(4, [0x0, 0x40, 0x80, 0xC0], 4, 100, StreamMode::Read);
        let mut mem = mem_with(512);
        run_reads(&mut d, &mut mem, 50);
        for t in 0..T {
            assert_eq!(d.occupancy(0, 0, t) + d.in_flight(0, 0, t), 4);
        }
        d.check_credits().unwrap();
    }

    #[test]
    fn zero_stride_broadcasts() {
        let mut d = setup(2, [0x8; T], 0, 3, StreamMode::Read);
        let mut mem = mem_with(8);
        run_reads(&mut d, &mut mem, 5);
        assert_eq!(d.pop(0, 0, 0xF).unwrap(), vec![2; T]);
    }

    #[test]
    fn readiness_respects_mask() {
        // thread 2 has nothing to stream
        let mut d = Dmsl::new(1, 1, T, 4);
        let all = 0xF;
        d.csr_access(0, 0, DMSL_REG_BASE, CsrOp::Write, &[0x0, 0x100, 0x200, 0x300], all, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_STRIDE, CsrOp::Write, &[4; T], all, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_COUNT, CsrOp::Write, &[1, 1, 0, 1], all, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_CFG, CsrOp::Write, &[cfg_word(StreamMode::Read, true); T], all, true).unwrap();
        let mut mem = mem_with(256);
        run_reads(&mut d, &mut mem, 6);
        assert!(!d.has_data(0, 0, 0xF));
        assert!(d.has_data(0, 0, 0b1011));
        let v = d.pop(0, 0, 0b0001).unwrap();
        assert_eq!(v[0], 0);
        assert_eq!(d.occupancy(0, 0, 1), 1);
    }

    #[test]
    fn no_fetch_past_count() {
        let mut d = setup(8, [0x0, 0x4, 0x8, 0xC], 16, 2, StreamMode::Read);
        let mut mem = mem_with(64);
        run_reads(&mut d, &mut mem, 20);
        assert_eq!(d.stats.elements_fetched, 8);
    }

    #[test]
    fn write_stream_drains_in_order() {
        let mut d = setup(2, [0x100, 0x104, 0x108, 0x10C], 16, 0, StreamMode::Write);
        let mut mem = Memory::new(4096, 0);
        assert!(d.propose(0, &line16).is_empty());
        d.push(0, 0, 0xF, &[1, 2, 3, 4], 0).unwrap();
        d.push(0, 0, 0b0011, &[5, 6, 0, 0], 0).unwrap();
        assert!(!d.has_space(0, 0, 0b0001));
        assert!(d.has_space(0, 0, 0b0100));
        while !d.drained() {
            for p in d.propose(0, &line16) {
                d.grant(&p, 0, &mut mem).unwrap();
            }
        }
        assert_eq!(mem.read_u32s(0x100, 6).unwrap(), vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(mem.load(0x118, 4).unwrap(), 0);
    }

    #[test]
    fn write_waits_for_ready_cycle() {
        let mut d = setup(2, [0x0; T], 4, 0, StreamMode::Write);
        d.push(0, 0, 1, &[9, 0, 0, 0], 5).unwrap();
        assert!(d.propose(4, &line16).is_empty());
        assert_eq!(d.propose(5, &line16).len(), 1);
    }

    #[test]
    fn reconfigure_while_active_is_rejected() {
        let mut d = setup(2, [0; T], 4, 4, StreamMode::Read);
        let e = d.csr_access(0, 0, DMSL_REG_BASE, CsrOp::Write, &[0; T], 0xF, true);
        assert_eq!(e, Err(DmslError::ReconfigureWhileActive { unit: 0, warp: 0 }));
        // other warps are independent
        d.csr_access(0, 1, DMSL_REG_BASE, CsrOp::Write, &[0; T], 0xF, true).unwrap();
    }

    #[test]
    fn zero_stride_write_rejected() {
        let mut d = Dmsl::new(1, 1, T, 2);
        d.csr_access(0, 0, DMSL_REG_COUNT, CsrOp::Write, &[4; T], 1, true).unwrap();
        let e = d.csr_access(0, 0, DMSL_REG_CFG, CsrOp::Write, &[cfg_word(StreamMode::Write, true); T], 1, true);
        assert!(matches!(e, Err(DmslError::BadStride { .. })));
    }

    #[test]
    fn ranges_cover_all_lanes() {
        let d = setup(4, [0x3C, 0x38, 0x34, 0x30], -16, 3, StreamMode::Read);
        assert_eq!(d.ranges(), &[StreamRange { unit: 0, warp: 0, mode: StreamMode::Read, lo: 0x10, hi: 0x40 }]);
    }

    #[test]
    fn overlap_needs_a_reader_and_a_writer() {
        let r = |mode, lo, hi| StreamRange { unit: 0, warp: 0, mode, lo, hi };
        assert!(overlapping(&[r(StreamMode::Read, 0, 16), r(StreamMode::Read, 8, 24)]).is_none());
        assert!(overlapping(&[r(StreamMode::ReadWrite, 0, 16)]).is_none());
        assert!(overlapping(&[r(StreamMode::Read, 0, 16), r(StreamMode::Write, 16, 32)]).is_none());
        assert!(overlapping(&[r(StreamMode::Write, 12, 20), r(StreamMode::Read, 0, 16)]).is_some());
    }

    #[test]
    fn idle_lanes_skip_stride_check() {
        let mut d = Dmsl::new(1, 1, T, 2);
        d.csr_access(0, 0, DMSL_REG_STRIDE, CsrOp::Write, &[4; T], 1, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_COUNT, CsrOp::Write, &[4; T], 1, true).unwrap();
        d.csr_access(0, 0, DMSL_REG_CFG, CsrOp::Write, &[cfg_word(StreamMode::Write, true); T], 1, true).unwrap();
    }

    #[test]
    fn fuller_warp_yields_to_emptier_one() {
        let mut d = Dmsl::new(1, 2, 1, 4);
        for w in 0..2 {
            d.csr_access(0, w, DMSL_REG_BASE, CsrOp::Write, &[0x40 * w as u32], 1, true).unwrap();
            d.csr_access(0, w, DMSL_REG_STRIDE, CsrOp::Write, &[4], 1, true).unwrap();
            d.csr_access(0, w, DMSL_REG_COUNT, CsrOp::Write, &[8], 1, true).unwrap();
            d.csr_access(0, w, DMSL_REG_CFG, CsrOp::Write, &[cfg_word(StreamMode::Read, true)], 1, true).unwrap();
        }
        let mut mem = mem_with(64);
        let p = d.propose(0, &line16);
        assert_eq!(p[0].warp, 0);
        d.grant(&p[0], 0, &mut mem).unwrap();
        // warp 0 now holds one element; warp 1 has more free credits
        let p = d.propose(1, &line16);
        assert_eq!((p[0].warp, p[0].request.need), (1, 4));
    }

    #[test]
    fn negative_stride_walks_down() {
        let mut d = setup(4, [0x3C, 0x38, 0x34, 0x30], -16, 3, StreamMode::Read);
        let mut mem = mem_with(16);
        run_reads(&mut d, &mut mem, 10);
        assert_eq!(d.pop(0, 0, 0xF).unwrap(), vec![15, 14, 13, 12]);
        assert_eq!(d.pop(0, 0, 0xF).unwrap(), vec![11, 10, 9, 8]);
    }
}
