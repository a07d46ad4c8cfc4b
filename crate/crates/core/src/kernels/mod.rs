//! Benchmark kernels in four variants each, with host-side golden models.
//!
//! Every kernel folds its work items over all hardware threads. The baseline
//! variant does this with a software loop and software tail predication.
//! The CFM variants move the loops into hardware, the LPS variant also drops
//! the software predication, and the full variant additionally streams its
//! operands through the DMSLs. Full variants read operands from layouts
//! marshaled at launch so that every per-thread stream is linear; the other
//! variants use the natural layouts.

mod builder;
mod conv2d;
mod gcn;
mod knn;
mod sfilter;
mod sgemm;
mod sgemv;
mod stream;

pub use builder::{lane_mask, Fold, Heap};

use crate::config::{CoreConfig, Extensions};
use crate::isa::{AsmError, KernelImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("{bench} has no `{variant}` variant")]
    UnsupportedVariant { bench: Bench, variant: Variant },
    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),
    #[error("kernel failed to assemble: {0}")]
    Asm(AsmError),
    #[error("unknown benchmark `{0}`")]
    UnknownBench(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    Base,
    Cfm,
    CfmLps,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::Cfm, Variant::CfmLps, Variant::Full];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Cfm => "cfm",
            Variant::CfmLps => "cfm+lps",
            Variant::Full => "full",
        }
    }

    pub fn extensions(self) -> Extensions {
        Extensions { cfm: self.cfm(), lps: self.lps(), dmsl: self.dmsl() }
    }

    pub fn cfm(self) -> bool {
        self != Variant::Base
    }

    pub fn lps(self) -> bool {
        matches!(self, Variant::CfmLps | Variant::Full)
    }

    pub fn dmsl(self) -> bool {
        self == Variant::Full
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| KernelError::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bench {
    Vecadd,
    Saxpy,
    Sgemv,
    Sgemm,
    Knn,
    Sfilter,
    Conv2d,
    GcnAggr,
}

impl Bench {
    pub const ALL: [Bench; 8] = [
        Bench::Vecadd,
        Bench::Saxpy,
        Bench::Sgemv,
        Bench::Sgemm,
        Bench::Knn,
        Bench::Sfilter,
        Bench::Conv2d,
        Bench::GcnAggr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Bench::Vecadd => "vecadd",
            Bench::Saxpy => "saxpy",
            Bench::Sgemv => "sgemv",
            Bench::Sgemm => "sgemm",
            Bench::Knn => "knn",
            Bench::Sfilter => "sfilter",
            Bench::Conv2d => "conv2d",
            Bench::GcnAggr => "gcn_aggr",
        }
    }

    pub fn variants(self) -> &'static [Variant] {
        match self {
            Bench::GcnAggr => &Variant::ALL[..3],
            _ => &Variant::ALL,
        }
    }

    pub fn supports(self, v: Variant) -> bool {
        self.variants().contains(&v)
    }

    /// Sweep points as `(start, end, step)`, in multiples of the hardware
    /// thread count (`end` exclusive).
    pub fn sweep_range(self) -> (u32, u32, u32) {
        match self {
            Bench::Vecadd | Bench::Saxpy | Bench::Sgemv | Bench::Knn => (4, 200, 20),
            Bench::Sgemm | Bench::Sfilter => (4, 50, 4),
            Bench::Conv2d => (2, 25, 2),
            Bench::GcnAggr => (8, 48, 8),
        }
    }

    pub fn sweep(self) -> Vec<u32> {
        let (a, b, s) = self.sweep_range();
        (a..b).step_by(s as usize).collect()
    }

    /// `count` points spread evenly over the sweep, ends included.
    pub fn sweep_subset(self, count: usize) -> Vec<u32> {
        let all = self.sweep();
        if count >= all.len() {
            return all;
        }
        let mut pts: Vec<u32> =
            (0..count).map(|i| all[i * (all.len() - 1) / (count.max(2) - 1)]).collect();
        pts.dedup();
        pts
    }
}

impl fmt::Display for Bench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Bench {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Bench::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| KernelError::UnknownBench(s.to_string()))
    }
}

/// One point of a benchmark sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Workload {
    /// Problem size in multiples of the hardware thread count.
    pub point: u32,
    /// Shave a few items off so the last iteration is partial.
    pub ragged: bool,
    pub seed: u64,
}

impl Workload {
    pub fn new(point: u32, seed: u64) -> Self {
        Workload { point, ragged: false, seed }
    }

    pub fn ragged(point: u32, seed: u64) -> Self {
        Workload { point, ragged: true, seed }
    }

    /// Requested item count for `h` hardware threads.
    pub fn items(&self, h: usize) -> usize {
        let n = self.point as usize * h;
        if self.ragged {
            n - ((h / 3) | 1).min(n - 1)
        } else {
            n
        }
    }
}

/// An output region to compare against the golden model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buffer {
    pub name: String,
    pub addr: u32,
    pub words: usize,
}

/// A kernel image plus what the host needs to launch and check it.
#[derive(Clone, Debug)]
pub struct BuiltKernel {
    pub image: KernelImage,
    /// Warps to launch.
    pub warps: usize,
    pub outputs: Vec<Buffer>,
    pub fold: Fold,
}

/// A generated problem instance: inputs, kernel builders and golden model.
pub trait Problem: Send + Sync {
    fn bench(&self) -> Bench;
    /// Work items after rounding to the kernel's natural shape.
    fn items(&self) -> usize;
    fn build(&self, v: Variant, cfg: &CoreConfig) -> Result<BuiltKernel, KernelError>;
    /// Expected contents of each output buffer, in `BuiltKernel::outputs` order.
    fn golden(&self) -> Vec<Vec<u32>>;
}

/// Generates the problem for `bench` at `workload` sized for `cfg`.
pub fn problem(bench: Bench, workload: &Workload, cfg: &CoreConfig) -> Result<Box<dyn Problem>, KernelError> {
    let n = workload.items(cfg.hw_threads());
    let mut rng = ChaCha8Rng::seed_from_u64(
        workload.seed ^ (bench as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ ((workload.point as u64) << 32),
    );
    Ok(match bench {
        Bench::Vecadd => Box::new(stream::Stream::vecadd(n, &mut rng)),
        Bench::Saxpy => Box::new(stream::Stream::saxpy(n, &mut rng)),
        Bench::Sgemv => Box::new(sgemv::Sgemv::new(n, &mut rng)),
        Bench::Sgemm => Box::new(sgemm::Sgemm::new(n, &mut rng)),
        Bench::Knn => Box::new(knn::Knn::new(n, &mut rng)),
        Bench::Sfilter => Box::new(sfilter::Sfilter::new(n, &mut rng)),
        Bench::Conv2d => Box::new(conv2d::Conv2d::new(n, &mut rng)),
        Bench::GcnAggr => Box::new(gcn::Gcn::new(n, cfg, &mut rng)?),
    })
}

/// Uniform in [-1, 1) with exact zeros replaced, so that a product never
/// collapses to a signed zero.
pub(crate) fn value(rng: &mut ChaCha8Rng) -> f32 {
    let v: f32 = rng.gen_range(-1.0..1.0);
    if v == 0.0 {
        0.5
    } else {
        v
    }
}

pub(crate) fn values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| value(rng)).collect()
}

pub(crate) fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

pub(crate) fn unsupported(bench: Bench, variant: Variant) -> KernelError {
    KernelError::UnsupportedVariant { bench, variant }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in Bench::ALL {
            assert_eq!(b.name().parse::<Bench>().unwrap(), b);
        }
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("fast".parse::<Variant>().is_err());
    }

    #[test]
    fn sweeps_follow_ranges() {
        assert_eq!(Bench::Saxpy.sweep(), vec![4, 24, 44, 64, 84, 104, 124, 144, 164, 184]);
        assert_eq!(Bench::Conv2d.sweep().first(), Some(&2));
        assert_eq!(Bench::Conv2d.sweep().last(), Some(&24));
        let sub = Bench::Sgemm.sweep_subset(5);
        assert_eq!(sub.len(), 5);
        assert_eq!(sub[0], 4);
        assert_eq!(*sub.last().unwrap(), 48);
    }

    #[test]
    fn gcn_has_no_streaming_variant() {
        assert!(!Bench::GcnAggr.supports(Variant::Full));
        assert!(Bench::Conv2d.supports(Variant::Full));
    }

    #[test]
    fn ragged_workloads_leave_a_tail() {
        let w = Workload::ragged(4, 1);
        assert_eq!(w.items(128) % 128, 128 - 43);
        assert_eq!(Workload::new(4, 1).items(128), 512);
    }
}
