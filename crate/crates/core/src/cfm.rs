//! Fetch-stage control flow manager: nested hardware loops and the loop
//! predication stack (LPS).
//!
//! Each warp owns its loop configuration, iteration counters and LPS. On
//! every fetch the scheduled warp's PC is compared against the configured
//! loops:
//!
//! 1. fetching the start PC of an enabled loop that is not running enters
//!    it and pushes the current effective mask onto the LPS;
//! 2. the effective mask is `LPS top & loop activity & fetch mask`, where the
//!    loop activity mask is the tail mask on the final iteration;
//! 3. fetching the end PC of the innermost running loop either redirects to
//!    its start PC (more iterations) or pops the LPS and falls through.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REG_START_PC: u8 = 0;
pub const REG_END_PC: u8 = 1;
pub const REG_TAIL_TMASK: u8 = 2;
pub const REG_BOUND: u8 = 3;
pub const REG_STATE: u8 = 4;

pub const ENABLE_BIT: u32 = 1 << 31;
pub const BOUND_MASK: u32 = ENABLE_BIT - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CfmError {
    #[error("loop level {0} does not exist")]
    InvalidLoopLevel(usize),
    #[error("CFM register {0} does not exist")]
    InvalidRegId(u8),
    #[error("loop level {level} reconfigured while running")]
    ConfigWhileRunning { level: usize },
    #[error("loop level {level} reached its end PC with bound 0")]
    MisconfiguredLoop { level: usize },
    #[error("divergent region open across the end of loop level {level}")]
    SplitAcrossLoopEnd { level: usize },
}

/// Configuration of one loop level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub start_pc: u32,
    pub end_pc: u32,
    pub tail_tmask: u32,
    pub bound: u32,
    pub enable: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LpsEntry {
    pub level: usize,
    pub saved_mask: u32,
    /// IPDOM depth at loop entry; must match at every end-PC fetch.
    pub ipdom_depth: usize,
}

#[derive(Clone, Debug, Default)]
struct WarpLoops {
    configs: Vec<LoopConfig>,
    counters: Vec<u32>,
    running: Vec<bool>,
    lps: Vec<LpsEntry>,
}

/// Result of one fetch-stage evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CfmOutcome {
    /// PC override for the next fetch, `None` to fall through.
    pub next_pc: Option<u32>,
    /// Thread mask the fetched instruction executes under.
    pub mask: u32,
}

#[derive(Clone, Debug)]
pub struct Cfm {
    levels: usize,
    full_mask: u32,
    lps_enabled: bool,
    warps: Vec<WarpLoops>,
}

impl Cfm {
    pub fn new(levels: usize, num_warps: usize, full_mask: u32, lps_enabled: bool) -> Self {
        let w = WarpLoops {
            configs: vec![LoopConfig::default(); levels],
            counters: vec![0; levels],
            running: vec![false; levels],
            lps: Vec::with_capacity(levels),
        };
        Cfm { levels, full_mask, lps_enabled, warps: vec![w; num_warps] }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn config(&self, warp: usize, level: usize) -> LoopConfig {
        self.warps[warp].configs[level]
    }

    pub fn counter(&self, warp: usize, level: usize) -> u32 {
        self.warps[warp].counters[level]
    }

    pub fn is_running(&self, warp: usize, level: usize) -> bool {
        self.warps[warp].running[level]
    }

    /// Number of loops currently running for `warp`.
    pub fn depth(&self, warp: usize) -> usize {
        self.warps[warp].running.iter().filter(|r| **r).count()
    }

    pub fn lps_depth(&self, warp: usize) -> usize {
        self.warps[warp].lps.len()
    }

    pub fn any_running(&self, warp: usize) -> bool {
        self.warps[warp].running.iter().any(|r| *r)
    }

    fn innermost(&self, warp: usize) -> Option<usize> {
        self.warps[warp].running.iter().rposition(|r| *r)
    }

    fn activity_mask(&self, warp: usize, level: usize) -> u32 {
        let w = &self.warps[warp];
        let cfg = &w.configs[level];
        if cfg.bound > 0 && w.counters[level] == cfg.bound - 1 {
            cfg.tail_tmask
        } else {
            self.full_mask
        }
    }

    /// Mask driving execution for `warp` given the fetch-stage (divergence)
    /// mask. Identity when no loop runs or the LPS is not instantiated.
    pub fn effective_mask(&self, warp: usize, fetch_mask: u32) -> u32 {
        if !self.lps_enabled {
            return fetch_mask;
        }
        let w = &self.warps[warp];
        match (w.lps.last(), self.innermost(warp)) {
            (Some(top), Some(level)) => top.saved_mask & self.activity_mask(warp, level) & fetch_mask,
            _ => fetch_mask,
        }
    }

    /// Evaluates the fetch of `pc` by `warp`.
    pub fn step(
        &mut self,
        warp: usize,
        pc: u32,
        fetch_mask: u32,
        ipdom_depth: usize,
    ) -> Result<CfmOutcome, CfmError> {
        for level in 0..self.levels {
            let cfg = self.warps[warp].configs[level];
            if cfg.enable && !self.warps[warp].running[level] && pc == cfg.start_pc {
                let saved_mask = self.effective_mask(warp, fetch_mask);
                let w = &mut self.warps[warp];
                w.running[level] = true;
                w.counters[level] = 0;
                w.lps.push(LpsEntry { level, saved_mask, ipdom_depth });
            }
        }
        let mask = self.effective_mask(warp, fetch_mask);
        let mut next_pc = None;
        if let Some(level) = self.innermost(warp) {
            let w = &mut self.warps[warp];
            let cfg = w.configs[level];
            if pc == cfg.end_pc {
                if cfg.bound == 0 {
                    return Err(CfmError::MisconfiguredLoop { level });
                }
                let entry_depth = w.lps.last().map(|e| e.ipdom_depth).unwrap_or(0);
                if entry_depth != ipdom_depth {
                    return Err(CfmError::SplitAcrossLoopEnd { level });
                }
                if w.counters[level] + 1 < cfg.bound {
                    w.counters[level] += 1;
                    next_pc = Some(cfg.start_pc);
                } else {
                    w.counters[level] = 0;
                    w.running[level] = false;
                    let popped = w.lps.pop();
                    debug_assert_eq!(popped.map(|e| e.level), Some(level));
                }
            }
        }
        Ok(CfmOutcome { next_pc, mask })
    }

    /// Writes one CFM register for `warp`; returns the previous value.
    pub fn configure(&mut self, warp: usize, level: usize, reg: u8, value: u32) -> Result<u32, CfmError> {
        let old = self.read(warp, level, reg)?;
        let w = &mut self.warps[warp];
        if reg != REG_STATE && w.running[level] {
            return Err(CfmError::ConfigWhileRunning { level });
        }
        let cfg = &mut w.configs[level];
        match reg {
            REG_START_PC => cfg.start_pc = value,
            REG_END_PC => cfg.end_pc = value,
            REG_TAIL_TMASK => cfg.tail_tmask = value & self.full_mask,
            REG_BOUND => {
                cfg.bound = value & BOUND_MASK;
                cfg.enable = value & ENABLE_BIT != 0;
            }
            REG_STATE => w.counters[level] = value,
            _ => unreachable!("validated by read"),
        }
        Ok(old)
    }

    pub fn read(&self, warp: usize, level: usize, reg: u8) -> Result<u32, CfmError> {
        if level >= self.levels {
            return Err(CfmError::InvalidLoopLevel(level));
        }
        let w = &self.warps[warp];
        let cfg = &w.configs[level];
        Ok(match reg {
            REG_START_PC => cfg.start_pc,
            REG_END_PC => cfg.end_pc,
            REG_TAIL_TMASK => cfg.tail_tmask,
            REG_BOUND => cfg.bound | if cfg.enable { ENABLE_BIT } else { 0 },
            REG_STATE => w.counters[level],
            _ => return Err(CfmError::InvalidRegId(reg)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_loop(bound: u32, tail: u32, t: usize) -> Cfm {
        let full = if t == 32 { u32::MAX } else { (1 << t) - 1 };
        let mut c = Cfm::new(3, 2, full, true);
        c.configure(0, 0, REG_START_PC, 0x100).unwrap();
        c.configure(0, 0, REG_END_PC, 0x120).unwrap();
        c.configure(0, 0, REG_TAIL_TMASK, tail).unwrap();
        c.configure(0, 0, REG_BOUND, ENABLE_BIT | bound).unwrap();
        c
    }

    #[test]
    fn back_edge_then_fall_through() {
        let mut c = one_loop(4, 0xffff, 16);
        c.step(0, 0x100, 0xffff, 0).unwrap();
        let o = c.step(0, 0x120, 0xffff, 0).unwrap();
        assert_eq!(o.next_pc, Some(0x100));
        assert_eq!(c.counter(0, 0), 1);

        c.configure(0, 0, REG_STATE, 3).unwrap();
        let o = c.step(0, 0x120, 0xffff, 0).unwrap();
        assert_eq!(o.next_pc, None);
        assert_eq!(c.counter(0, 0), 0);
        assert_eq!(c.lps_depth(0), 0);
        assert!(!c.is_running(0, 0));
    }

    #[test]
    fn tail_mask_applies_on_last_iteration_only() {
        let mut c = one_loop(3, 0x00ff, 16);
        let mut masks = Vec::new();
        let mut pc = 0x100;
        for _ in 0..20 {
            let o = c.step(0, pc, 0xffff, 0).unwrap();
            if pc == 0x100 {
                masks.push(o.mask);
            }
            pc = o.next_pc.unwrap_or(pc + 4);
            if pc > 0x120 {
                break;
            }
        }
        assert_eq!(masks, vec![0xffff, 0xffff, 0x00ff]);
    }

    #[test]
    fn single_iteration_loop() {
        let mut c = one_loop(1, 0x0f0f, 16);
        let o = c.step(0, 0x100, 0xffff, 0).unwrap();
        assert_eq!(o.mask, 0x0f0f);
        let o = c.step(0, 0x120, 0xffff, 0).unwrap();
        assert_eq!((o.next_pc, o.mask), (None, 0x0f0f));
        assert_eq!(c.lps_depth(0), 0);
    }

    #[test]
    fn empty_lps_is_identity() {
        let c = Cfm::new(2, 1, 0xffff, true);
        assert_eq!(c.effective_mask(0, 0b1010), 0b1010);
    }

    #[test]
    fn three_way_and_with_divergence() {
        let mut c = one_loop(2, 0x00ff, 16);
        c.step(0, 0x100, 0xffff, 0).unwrap();
        // inside an if-then in the first iteration
        assert_eq!(c.effective_mask(0, 0x0f0f), 0x0f0f);
        c.configure(0, 0, REG_STATE, 1).unwrap();
        assert_eq!(c.effective_mask(0, 0x0f0f), 0x000f);
    }

    #[test]
    fn lps_top_limits_mask() {
        let mut c = one_loop(4, 0xffff, 16);
        c.step(0, 0x100, 0x00ff, 0).unwrap();
        assert_eq!(c.effective_mask(0, 0xffff), 0x00ff);
    }

    #[test]
    fn zero_bound_at_end_is_misconfigured() {
        let mut c = one_loop(0, 0xffff, 16);
        c.step(0, 0x100, 0xffff, 0).unwrap();
        assert_eq!(c.step(0, 0x120, 0xffff, 0), Err(CfmError::MisconfiguredLoop { level: 0 }));
    }

    #[test]
    fn configure_errors() {
        let mut c = one_loop(4, 0xffff, 16);
        assert_eq!(c.configure(0, 3, 0, 0), Err(CfmError::InvalidLoopLevel(3)));
        assert_eq!(c.configure(0, 0, 5, 0), Err(CfmError::InvalidRegId(5)));
        c.step(0, 0x100, 0xffff, 0).unwrap();
        assert_eq!(c.configure(0, 0, REG_START_PC, 0), Err(CfmError::ConfigWhileRunning { level: 0 }));
        // loop state stays writable for context restore
        assert_eq!(c.configure(0, 0, REG_STATE, 2), Ok(0));
    }

    #[test]
    fn bound_register_packs_enable_bit() {
        let mut c = Cfm::new(1, 1, 0xffff, true);
        c.configure(0, 0, REG_BOUND, (1 << 31) | 16).unwrap();
        let cfg = c.config(0, 0);
        assert_eq!((cfg.bound, cfg.enable), (16, true));
        assert_eq!(c.read(0, 0, REG_BOUND).unwrap(), (1 << 31) | 16);
    }

    #[test]
    fn nested_loops_pop_innermost_first() {
        let mut c = Cfm::new(2, 1, 0xf, true);
        // outer 0x100..=0x10c, inner 0x104..=0x108
        for (lvl, s, e, b, t) in [(0, 0x100, 0x10c, 2, 0x3), (1, 0x104, 0x108, 2, 0x1)] {
            c.configure(0, lvl, REG_START_PC, s).unwrap();
            c.configure(0, lvl, REG_END_PC, e).unwrap();
            c.configure(0, lvl, REG_TAIL_TMASK, t).unwrap();
            c.configure(0, lvl, REG_BOUND, ENABLE_BIT | b).unwrap();
        }
        let mut pc = 0x100;
        let mut trace = Vec::new();
        while pc <= 0x10c {
            let o = c.step(0, pc, 0xf, 0).unwrap();
            assert_eq!(c.lps_depth(0), c.depth(0));
            trace.push((pc, o.mask));
            pc = o.next_pc.unwrap_or(pc + 4);
        }
        let expected = vec![
            (0x100, 0xf),
            (0x104, 0xf),
            (0x108, 0xf),
            (0x104, 0x1),
            (0x108, 0x1),
            (0x10c, 0xf),
            (0x100, 0x3),
            (0x104, 0x3),
            (0x108, 0x3),
            (0x104, 0x1),
            (0x108, 0x1),
            (0x10c, 0x3),
        ];
        assert_eq!(trace, expected);
        assert_eq!(c.lps_depth(0), 0);
    }

    #[test]
    fn without_lps_mask_passes_through() {
        let mut c = Cfm::new(1, 1, 0xf, false);
        c.configure(0, 0, REG_START_PC, 0x100).unwrap();
        c.configure(0, 0, REG_END_PC, 0x100).unwrap();
        c.configure(0, 0, REG_TAIL_TMASK, 0x1).unwrap();
        c.configure(0, 0, REG_BOUND, ENABLE_BIT | 1).unwrap();
        let o = c.step(0, 0x100, 0x7, 0).unwrap();
        assert_eq!((o.next_pc, o.mask), (None, 0x7));
    }

    #[test]
    fn split_open_across_end_is_rejected() {
        let mut c = one_loop(2, 0xffff, 16);
        c.step(0, 0x100, 0xffff, 0).unwrap();
        assert_eq!(c.step(0, 0x120, 0xffff, 1), Err(CfmError::SplitAcrossLoopEnd { level: 0 }));
    }
}
