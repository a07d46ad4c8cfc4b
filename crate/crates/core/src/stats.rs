use crate::dmsl::DmslStats;
use crate::isa::Category;
use crate::memsys::MemStats;
use serde::{Deserialize, Serialize};

/// Counters collected over one kernel run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub cycles: u64,
    pub threads: usize,
    /// Issued warp instructions per category, indexed by [`Category::index`].
    pub instr: [u64; 5],
    pub instr_total: u64,
    /// Thread-level FLOPs: one per active lane of each FP arithmetic op.
    pub flops: u64,
    pub fetches: u64,
    pub idle_cycles: u64,
    pub stall_scoreboard: u64,
    pub stall_dmsl_data: u64,
    pub stall_dmsl_space: u64,
    pub stall_lsu_full: u64,
    pub issued_per_warp: Vec<u64>,
    pub mem: MemStats,
    pub dmsl: DmslStats,
}

impl RunStats {
    pub fn new(num_warps: usize, threads: usize) -> Self {
        RunStats { threads, issued_per_warp: vec![0; num_warps], ..Default::default() }
    }

    pub fn count(&self, cat: Category) -> u64 {
        self.instr[cat.index()]
    }

    /// Achieved fraction of the 1 FLOP/cycle/thread peak.
    pub fn utilization(&self) -> f64 {
        if self.cycles == 0 || self.threads == 0 {
            return 0.0;
        }
        self.flops as f64 / (self.cycles as f64 * self.threads as f64)
    }

    pub fn check(&self) -> Result<(), String> {
        let sum: u64 = self.instr.iter().sum();
        if sum != self.instr_total {
            return Err(format!("category counts sum to {sum}, total is {}", self.instr_total));
        }
        let issued: u64 = self.issued_per_warp.iter().sum();
        if issued != self.instr_total {
            return Err(format!("per-warp issues sum to {issued}, total is {}", self.instr_total));
        }
        if self.utilization() > 1.0 {
            return Err(format!("utilization {} exceeds peak", self.utilization()));
        }
        Ok(())
    }
}
