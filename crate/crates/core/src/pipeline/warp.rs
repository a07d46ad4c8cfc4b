use crate::isa::Instruction;
use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IpdomEntry {
    /// Fetch mask to restore at the final join.
    pub saved_mask: u32,
    pub else_mask: u32,
    pub else_pc: u32,
    pub else_pending: bool,
}

/// An instruction sitting in a warp's instruction buffer.
#[derive(Clone, Copy, Debug)]
pub struct Fetched {
    pub pc: u32,
    pub instr: Instruction,
    /// Effective thread mask computed at fetch.
    pub mask: u32,
}

#[derive(Clone, Debug, Default)]
pub struct Warp {
    pub pc: u32,
    /// Fetch-stage (divergence) thread mask.
    pub tmask: u32,
    pub active: bool,
    pub ipdom: Vec<IpdomEntry>,
    pub ibuf: VecDeque<Fetched>,
    /// A serializing instruction is in the buffer; fetch waits for it.
    pub fetch_stalled: bool,
    pub barrier_wait: bool,
}

impl Warp {
    pub fn activate(&mut self, pc: u32, mask: u32) {
        *self = Warp { pc, tmask: mask, active: true, ..Default::default() };
    }

    pub fn can_fetch(&self, ibuf_depth: usize) -> bool {
        self.active && !self.fetch_stalled && !self.barrier_wait && self.ibuf.len() < ibuf_depth
    }
}

/// Per-warp in-flight destination registers, integer and FP kept apart.
#[derive(Clone, Debug)]
pub struct Scoreboard {
    busy: Vec<[u32; 2]>,
}

impl Scoreboard {
    pub fn new(num_warps: usize) -> Self {
        Scoreboard { busy: vec![[0; 2]; num_warps] }
    }

    fn slot(reg: crate::isa::Reg) -> (usize, u32) {
        (reg.space as usize, 1 << reg.index)
    }

    pub fn is_busy(&self, warp: usize, reg: crate::isa::Reg) -> bool {
        let (s, bit) = Self::slot(reg);
        self.busy[warp][s] & bit != 0
    }

    pub fn reserve(&mut self, warp: usize, reg: crate::isa::Reg) {
        let (s, bit) = Self::slot(reg);
        self.busy[warp][s] |= bit;
    }

    pub fn release(&mut self, warp: usize, reg: crate::isa::Reg) {
        let (s, bit) = Self::slot(reg);
        self.busy[warp][s] &= !bit;
    }

    pub fn clear(&self) -> bool {
        self.busy.iter().all(|b| b[0] == 0 && b[1] == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Reg;

    #[test]
    fn spaces_are_separate() {
        let mut sb = Scoreboard::new(2);
        sb.reserve(0, Reg::int(5));
        assert!(sb.is_busy(0, Reg::int(5)));
        assert!(!sb.is_busy(0, Reg::fp(5)));
        assert!(!sb.is_busy(1, Reg::int(5)));
        sb.release(0, Reg::int(5));
        assert!(sb.clear());
    }
}
