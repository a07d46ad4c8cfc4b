//! Fixtures shared by the criterion benches.

use simtflow::harness::variant_config;
use simtflow::kernels::{problem, BuiltKernel};
use simtflow::{Bench, CoreConfig, Variant, Workload};

/// A built kernel and the config to run it on.
pub fn fixture(bench: Bench, variant: Variant, point: u32) -> (BuiltKernel, CoreConfig) {
    let cfg = variant_config(&CoreConfig::default(), variant);
    let p = problem(bench, &Workload::new(point, 1), &cfg).expect("benchmark fits the default core");
    (p.build(variant, &cfg).expect("kernel builds"), cfg)
}
