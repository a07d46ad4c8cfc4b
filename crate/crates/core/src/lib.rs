//! Cycle-level model of a SIMT GPGPU core with three decoupling extensions:
//! hardware loops, a loop predication stack that applies tail masks in
//! hardware, and decoupled memory streaming lanes that feed operands
//! straight into the register read path.
//!
//! [`harness`] runs the benchmark kernels in [`kernels`] on [`Core`] and
//! reports the resulting metrics.

pub mod cfm;
pub mod config;
pub mod csr;
pub mod dmsl;
pub mod isa;
pub mod memsys;
pub mod pipeline;
pub mod stats;
pub mod harness;
pub mod kernels;

pub use config::{ConfigError, CoreConfig, Extensions};
pub use harness::{run_matrix, run_one, HarnessError, MatrixReport, MatrixSpec, MetricRow};
pub use isa::{assemble, Category, KernelImage};
pub use kernels::{Bench, Variant, Workload};
pub use pipeline::{Core, SimError, TraceEvent, TraceKind};
pub use stats::RunStats;
