//! L1 data cache with P ports and interleaved banks, a shared scratchpad
//! window and flat backing memory, plus the port arbiter that multiplexes
//! the LSU and the streaming lanes.
//!
//! The cache is a timing model: it tracks tags, LRU order, dirty bits and
//! outstanding fills. Data always lives in [`Memory`], which requestors read
//! or write when their request is granted.

use crate::config::CoreConfig;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use thiserror::Error;

/// Base of the shared-memory window. Accesses there bypass the cache.
pub const SHARED_BASE: u32 = 0xFF00_0000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MemError {
    #[error("address {addr:#010x} (+{len}) is outside memory")]
    OutOfRange { addr: u32, len: u32 },
    #[error("unaligned {len}-byte access at {addr:#010x}")]
    Unaligned { addr: u32, len: u32 },
}

/// Flat byte-addressed backing store plus the shared scratchpad.
#[derive(Clone, Debug)]
pub struct Memory {
    global: Vec<u8>,
    shared: Vec<u8>,
}

impl Memory {
    pub fn new(size: usize, shared_size: usize) -> Self {
        Memory { global: vec![0; size], shared: vec![0; shared_size] }
    }

    pub fn is_shared(addr: u32) -> bool {
        addr >= SHARED_BASE
    }

    fn slice(&self, addr: u32, len: u32) -> Result<&[u8], MemError> {
        let (buf, off) = if Self::is_shared(addr) {
            (&self.shared, (addr - SHARED_BASE) as usize)
        } else {
            (&self.global, addr as usize)
        };
        buf.get(off..off + len as usize).ok_or(MemError::OutOfRange { addr, len })
    }

    fn slice_mut(&mut self, addr: u32, len: u32) -> Result<&mut [u8], MemError> {
        let (buf, off) = if Self::is_shared(addr) {
            (&mut self.shared, (addr - SHARED_BASE) as usize)
        } else {
            (&mut self.global, addr as usize)
        };
        buf.get_mut(off..off + len as usize).ok_or(MemError::OutOfRange { addr, len })
    }

    /// Little-endian load of 1, 2 or 4 bytes, zero-extended.
    pub fn load(&self, addr: u32, len: u32) -> Result<u32, MemError> {
        if !addr.is_multiple_of(len) {
            return Err(MemError::Unaligned { addr, len });
        }
        let s = self.slice(addr, len)?;
        let mut b = [0u8; 4];
        b[..len as usize].copy_from_slice(s);
        Ok(u32::from_le_bytes(b))
    }

    pub fn store(&mut self, addr: u32, len: u32, value: u32) -> Result<(), MemError> {
        if !addr.is_multiple_of(len) {
            return Err(MemError::Unaligned { addr, len });
        }
        let s = self.slice_mut(addr, len)?;
        s.copy_from_slice(&value.to_le_bytes()[..len as usize]);
        Ok(())
    }

    pub fn read_bytes(&self, addr: u32, len: usize) -> Result<&[u8], MemError> {
        self.slice(addr, len as u32)
    }

    pub fn write_bytes(&mut self, addr: u32, bytes: &[u8]) -> Result<(), MemError> {
        self.slice_mut(addr, bytes.len() as u32)?.copy_from_slice(bytes);
        Ok(())
    }

    pub fn read_f32s(&self, addr: u32, n: usize) -> Result<Vec<f32>, MemError> {
        let s = self.slice(addr, 4 * n as u32)?;
        Ok(s.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn read_u32s(&self, addr: u32, n: usize) -> Result<Vec<u32>, MemError> {
        let s = self.slice(addr, 4 * n as u32)?;
        Ok(s.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Who issued a line request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Lsu,
    Dmsl(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LineRequest {
    pub origin: Origin,
    pub warp: usize,
    pub line_addr: u32,
    pub write: bool,
    /// Arbitration priority: free credits for reads, occupancy for writes.
    pub need: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grant {
    /// Index into the request slice passed to [`MemSys::arbitrate`].
    pub request: usize,
    pub port: usize,
    pub bank: usize,
    /// Cycle at which the line's data is available to the requestor.
    pub ready_at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipReason {
    BankBusy,
    MshrFull,
    NoPort,
}

/// One cycle of arbitration, kept when tracing is enabled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArbRecord {
    pub cycle: u64,
    pub requests: Vec<LineRequest>,
    pub grants: Vec<Grant>,
    pub skipped: Vec<(usize, SkipReason)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemStats {
    pub hits: u64,
    pub misses: u64,
    pub mshr_merges: u64,
    pub mshr_stalls: u64,
    pub bank_conflicts: u64,
    pub writebacks: u64,
    pub grants: u64,
    pub lsu_requests: u64,
    pub dmsl_requests: u64,
    pub shared_accesses: u64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Way {
    valid: bool,
    dirty: bool,
    line: u32,
    last_use: u64,
    fill_done: u64,
}

#[derive(Clone, Debug)]
struct Cache {
    line_shift: u32,
    sets: usize,
    ways: Vec<Way>,
    assoc: usize,
    banks: usize,
    fills: Vec<VecDeque<u64>>,
    mshr_per_bank: usize,
    hit_latency: u64,
    miss_latency: u64,
    use_clock: u64,
}

enum Probe {
    Hit(usize),
    Miss,
}

impl Cache {
    fn new(cfg: &CoreConfig) -> Self {
        Cache {
            line_shift: cfg.line_size.trailing_zeros(),
            sets: cfg.num_sets(),
            ways: vec![Way::default(); cfg.num_lines()],
            assoc: cfg.associativity,
            banks: cfg.cache_banks,
            fills: vec![VecDeque::new(); cfg.cache_banks],
            mshr_per_bank: cfg.mshr_per_bank,
            hit_latency: cfg.hit_latency,
            miss_latency: cfg.miss_latency,
            use_clock: 0,
        }
    }

    fn line_index(&self, line_addr: u32) -> usize {
        (line_addr >> self.line_shift) as usize
    }

    fn bank(&self, line_addr: u32) -> usize {
        self.line_index(line_addr) % self.banks
    }

    fn set_range(&self, line_addr: u32) -> std::ops::Range<usize> {
        let set = self.line_index(line_addr) % self.sets;
        set * self.assoc..(set + 1) * self.assoc
    }

    fn probe(&self, line_addr: u32) -> Probe {
        self.set_range(line_addr)
            .find(|&i| self.ways[i].valid && self.ways[i].line == line_addr)
            .map_or(Probe::Miss, Probe::Hit)
    }

    fn mshr_free(&mut self, bank: usize, now: u64) -> bool {
        let q = &mut self.fills[bank];
        while q.front().is_some_and(|&t| t <= now) {
            q.pop_front();
        }
        q.len() < self.mshr_per_bank
    }

    fn can_accept(&mut self, line_addr: u32, now: u64) -> bool {
        match self.probe(line_addr) {
            Probe::Hit(_) => true,
            Probe::Miss => {
                let bank = self.bank(line_addr);
                self.mshr_free(bank, now)
            }
        }
    }

    fn access(&mut self, line_addr: u32, write: bool, now: u64, stats: &mut MemStats) -> u64 {
        self.use_clock += 1;
        let hit_ready = now + self.hit_latency;
        match self.probe(line_addr) {
            Probe::Hit(i) => {
                let w = &mut self.ways[i];
                w.last_use = self.use_clock;
                w.dirty |= write;
                if w.fill_done > now {
                    stats.mshr_merges += 1;
                    w.fill_done.max(hit_ready)
                } else {
                    stats.hits += 1;
                    hit_ready
                }
            }
            Probe::Miss => {
                stats.misses += 1;
                let range = self.set_range(line_addr);
                let victim = range
                    .clone()
                    .find(|&i| !self.ways[i].valid)
                    .unwrap_or_else(|| range.min_by_key(|&i| self.ways[i].last_use).unwrap());
                if self.ways[victim].valid && self.ways[victim].dirty {
                    stats.writebacks += 1;
                }
                let ready = now + self.miss_latency;
                self.ways[victim] =
                    Way { valid: true, dirty: write, line: line_addr, last_use: self.use_clock, fill_done: ready };
                let bank = self.bank(line_addr);
                self.fills[bank].push_back(ready);
                ready
            }
        }
    }

    fn quiescent(&self, now: u64) -> bool {
        self.fills.iter().all(|q| q.back().is_none_or(|&t| t <= now))
    }
}

/// The data-side memory hierarchy of one core.
#[derive(Clone, Debug)]
pub struct MemSys {
    pub mem: Memory,
    pub stats: MemStats,
    cache: Cache,
    ports: usize,
    line_size: u32,
    shared_latency: u64,
    trace: Option<Vec<ArbRecord>>,
}

impl MemSys {
    pub fn new(cfg: &CoreConfig) -> Self {
        MemSys {
            mem: Memory::new(cfg.mem_size, cfg.shared_mem_size),
            stats: MemStats::default(),
            cache: Cache::new(cfg),
            ports: cfg.cache_ports,
            line_size: cfg.line_size as u32,
            shared_latency: cfg.shared_mem_latency,
            trace: None,
        }
    }

    pub fn line_size(&self) -> u32 {
        self.line_size
    }

    pub fn line_of(&self, addr: u32) -> u32 {
        addr & !(self.line_size - 1)
    }

    pub fn bank_of(&self, line_addr: u32) -> usize {
        self.cache.bank(line_addr)
    }

    pub fn ports(&self) -> usize {
        self.ports
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<ArbRecord> {
        self.trace.take().unwrap_or_default()
    }

    pub fn shared_latency(&self) -> u64 {
        self.shared_latency
    }

    /// Shared-window access by the LSU; does not use a cache port.
    pub fn shared_access(&mut self, now: u64) -> u64 {
        self.stats.shared_accesses += 1;
        now + self.shared_latency
    }

    /// Grants at most one request per port and per bank. The LSU may only
    /// use port 0 and wins it whenever it asks; stream lanes follow in
    /// descending need, ties to the lower unit index. A request whose bank
    /// is already taken, or which would miss with no free MSHR, is skipped
    /// and the next candidate considered.
    pub fn arbitrate(&mut self, requests: &[LineRequest], now: u64) -> Vec<Grant> {
        let mut order: Vec<usize> = (0..requests.len()).collect();
        order.sort_by(|&a, &b| {
            let (ra, rb) = (&requests[a], &requests[b]);
            let lsu = |r: &LineRequest| r.origin != Origin::Lsu;
            lsu(ra)
                .cmp(&lsu(rb))
                .then(rb.need.cmp(&ra.need))
                .then(ra.origin.cmp(&rb.origin))
                .then(ra.warp.cmp(&rb.warp))
        });

        let mut grants: Vec<Grant> = Vec::new();
        let mut skipped = Vec::new();
        let mut bank_used = vec![false; self.cache.banks];
        let mut next_port = 0;
        for idx in order {
            let r = requests[idx];
            match r.origin {
                Origin::Lsu => self.stats.lsu_requests += 1,
                Origin::Dmsl(_) => self.stats.dmsl_requests += 1,
            }
            let lsu = r.origin == Origin::Lsu;
            if next_port >= self.ports || (lsu && next_port != 0) {
                skipped.push((idx, SkipReason::NoPort));
                continue;
            }
            let bank = self.cache.bank(r.line_addr);
            if bank_used[bank] {
                self.stats.bank_conflicts += 1;
                skipped.push((idx, SkipReason::BankBusy));
                continue;
            }
            if !self.cache.can_accept(r.line_addr, now) {
                self.stats.mshr_stalls += 1;
                skipped.push((idx, SkipReason::MshrFull));
                continue;
            }
            bank_used[bank] = true;
            let ready_at = self.cache.access(r.line_addr, r.write, now, &mut self.stats);
            grants.push(Grant { request: idx, port: next_port, bank, ready_at });
            next_port += 1;
        }
        self.stats.grants += grants.len() as u64;
        if let Some(t) = self.trace.as_mut() {
            if !requests.is_empty() {
                t.push(ArbRecord { cycle: now, requests: requests.to_vec(), grants: grants.clone(), skipped });
            }
        }
        grants
    }

    /// No line fill outstanding.
    pub fn quiescent(&self, now: u64) -> bool {
        self.cache.quiescent(now)
    }
}

/// Checks the per-cycle arbitration invariants on a recorded trace: grants
/// within the port budget, one grant per bank, LSU only on port 0 and
/// before any stream lane, and stream grants in non-increasing need with
/// every higher-need loser explained by a bank or MSHR conflict.
pub fn check_arbitration(rec: &ArbRecord, ports: usize) -> Result<(), String> {
    if rec.grants.len() > ports {
        return Err(format!("cycle {}: {} grants for {} ports", rec.cycle, rec.grants.len(), ports));
    }
    let mut banks: Vec<usize> = rec.grants.iter().map(|g| g.bank).collect();
    banks.sort_unstable();
    if banks.windows(2).any(|w| w[0] == w[1]) {
        return Err(format!("cycle {}: two grants to one bank", rec.cycle));
    }
    for (i, g) in rec.grants.iter().enumerate() {
        if g.port != i {
            return Err(format!("cycle {}: ports not filled in order", rec.cycle));
        }
        if rec.requests[g.request].origin == Origin::Lsu && g.port != 0 {
            return Err(format!("cycle {}: LSU granted port {}", rec.cycle, g.port));
        }
    }
    let lsu_asked = rec.requests.iter().any(|r| r.origin == Origin::Lsu);
    if lsu_asked {
        let lsu_granted = rec.grants.iter().any(|g| rec.requests[g.request].origin == Origin::Lsu);
        let lsu_blocked = rec.skipped.iter().any(|(i, why)| {
            rec.requests[*i].origin == Origin::Lsu && *why != SkipReason::NoPort
        });
        if !lsu_granted && !lsu_blocked {
            return Err(format!("cycle {}: LSU request lost port 0", rec.cycle));
        }
    }
    let needs: Vec<u32> = rec
        .grants
        .iter()
        .map(|g| &rec.requests[g.request])
        .filter(|r| r.origin != Origin::Lsu)
        .map(|r| r.need)
        .collect();
    if needs.windows(2).any(|w| w[0] < w[1]) {
        return Err(format!("cycle {}: stream grants not in descending need {needs:?}", rec.cycle));
    }
    let min_granted = needs.last().copied();
    for (i, why) in &rec.skipped {
        let r = &rec.requests[*i];
        if r.origin == Origin::Lsu || *why != SkipReason::NoPort {
            continue;
        }
        if let Some(m) = min_granted {
            if r.need > m {
                return Err(format!("cycle {}: need {} lost to need {}", rec.cycle, r.need, m));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CoreConfig {
        CoreConfig { line_size: 16, cache_banks: 4, cache_ports: 2, ..Default::default() }
    }

    fn req(origin: Origin, line: u32, need: u32) -> LineRequest {
        LineRequest { origin, warp: 0, line_addr: line, write: false, need }
    }

    #[test]
    fn lsu_takes_port_zero_and_neediest_stream_next() {
        let mut m = MemSys::new(&small());
        let reqs = [
            req(Origin::Dmsl(0), 0x10, 1),
            req(Origin::Dmsl(1), 0x20, 3),
            req(Origin::Lsu, 0x00, 0),
            req(Origin::Dmsl(2), 0x30, 2),
        ];
        let g = m.arbitrate(&reqs, 0);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].request, g[0].port), (2, 0));
        assert_eq!((g[1].request, g[1].port), (1, 1));
    }

    #[test]
    fn descending_need_without_lsu() {
        let mut m = MemSys::new(&small());
        let reqs =
            [req(Origin::Dmsl(0), 0x00, 1), req(Origin::Dmsl(1), 0x10, 3), req(Origin::Dmsl(2), 0x20, 2)];
        let g: Vec<usize> = m.arbitrate(&reqs, 0).iter().map(|g| g.request).collect();
        assert_eq!(g, vec![1, 2]);
    }

    #[test]
    fn single_port_single_stream() {
        let mut m = MemSys::new(&CoreConfig { cache_ports: 1, ..small() });
        let g = m.arbitrate(&[req(Origin::Dmsl(0), 0x40, 1)], 0);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn same_bank_serializes() {
        let mut m = MemSys::new(&small());
        // 4 banks of 16 B lines: 0x00 and 0x40 share bank 0
        let reqs = [req(Origin::Dmsl(0), 0x00, 2), req(Origin::Dmsl(1), 0x40, 1)];
        let g = m.arbitrate(&reqs, 0);
        assert_eq!(g.len(), 1);
        assert_eq!(m.stats.bank_conflicts, 1);
        let g = m.arbitrate(&reqs[1..], 1);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn cold_miss_then_hit() {
        let cfg = small();
        let mut m = MemSys::new(&cfg);
        let g = m.arbitrate(&[req(Origin::Lsu, 0x100, 0)], 10);
        assert_eq!(g[0].ready_at, 10 + cfg.miss_latency);
        let g = m.arbitrate(&[req(Origin::Lsu, 0x100, 0)], 100);
        assert_eq!(g[0].ready_at, 100 + cfg.hit_latency);
        assert_eq!((m.stats.misses, m.stats.hits), (1, 1));
    }

    #[test]
    fn in_flight_line_merges() {
        let cfg = small();
        let mut m = MemSys::new(&cfg);
        m.arbitrate(&[req(Origin::Lsu, 0x100, 0)], 0);
        let g = m.arbitrate(&[req(Origin::Dmsl(0), 0x100, 1)], 5);
        assert_eq!(g[0].ready_at, cfg.miss_latency);
        assert_eq!(m.stats.mshr_merges, 1);
    }

    #[test]
    fn mshr_limit_blocks_new_misses() {
        let cfg = CoreConfig { mshr_per_bank: 1, cache_ports: 1, ..small() };
        let mut m = MemSys::new(&cfg);
        assert_eq!(m.arbitrate(&[req(Origin::Lsu, 0x000, 0)], 0).len(), 1);
        // different line, same bank, fill still outstanding
        assert!(m.arbitrate(&[req(Origin::Lsu, 0x040, 0)], 1).is_empty());
        assert_eq!(m.stats.mshr_stalls, 1);
        assert_eq!(m.arbitrate(&[req(Origin::Lsu, 0x040, 0)], cfg.miss_latency).len(), 1);
    }

    #[test]
    fn lru_evicts_oldest_and_counts_writeback() {
        let cfg = CoreConfig { cache_size: 64, line_size: 16, associativity: 2, cache_banks: 1, ..small() };
        let mut m = MemSys::new(&cfg);
        // 2 sets x 2 ways; lines 0x00, 0x20, 0x40 all map to set 0
        let w = |line| LineRequest { origin: Origin::Lsu, warp: 0, line_addr: line, write: true, need: 0 };
        m.arbitrate(&[w(0x00)], 0);
        m.arbitrate(&[w(0x20)], 100);
        m.arbitrate(&[w(0x00)], 200);
        m.arbitrate(&[w(0x40)], 300);
        assert_eq!(m.stats.writebacks, 1);
        m.arbitrate(&[w(0x00)], 400);
        assert_eq!(m.stats.hits, 2);
    }

    #[test]
    fn memory_bounds_and_alignment() {
        let mut mem = Memory::new(64, 16);
        mem.store(60, 4, 0xdead_beef).unwrap();
        assert_eq!(mem.load(60, 4).unwrap(), 0xdead_beef);
        assert_eq!(mem.load(62, 2).unwrap(), 0xdead);
        assert!(matches!(mem.load(64, 4), Err(MemError::OutOfRange { .. })));
        assert!(matches!(mem.load(2, 4), Err(MemError::Unaligned { .. })));
        mem.store(SHARED_BASE + 12, 4, 7).unwrap();
        assert_eq!(mem.load(SHARED_BASE + 12, 4).unwrap(), 7);
    }

    #[test]
    fn recorded_traces_pass_checker() {
        let mut m = MemSys::new(&small());
        m.enable_trace();
        let reqs = [
            req(Origin::Lsu, 0x00, 0),
            req(Origin::Dmsl(0), 0x40, 5),
            req(Origin::Dmsl(1), 0x10, 4),
            req(Origin::Dmsl(2), 0x20, 1),
        ];
        m.arbitrate(&reqs, 0);
        for r in m.take_trace() {
            check_arbitration(&r, 2).unwrap();
        }
    }
}
