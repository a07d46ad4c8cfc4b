//! Experiment runner: single runs with golden checking, benchmark x variant
//! x config matrices, sweep averaging and the scalability/port studies.

pub mod oracle;
mod report;

pub use report::{read_csv, write_csv, write_json, MatrixReport};

use crate::config::CoreConfig;
use crate::dmsl;
use crate::isa::Category;
use crate::kernels::{self, Bench, BuiltKernel, KernelError, Problem, Variant, Workload};
use crate::pipeline::{Core, SimError, TraceEvent};
use crate::stats::RunStats;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{bench}/{variant} at point {point}: {source}")]
    Sim { bench: Bench, variant: Variant, point: u32, source: SimError },
    #[error(
        "{bench}/{variant} at point {point}: `{buffer}`[{index}] is {got:#010x}, expected {expected:#010x}"
    )]
    GoldenMismatch { bench: Bench, variant: Variant, point: u32, buffer: String, index: usize, expected: u32, got: u32 },
    #[error("{bench}/{variant} at point {point}: {reason}")]
    Invariant { bench: Bench, variant: Variant, point: u32, reason: String },
}

/// Outcome of one simulated kernel run.
#[derive(Clone, Debug)]
pub struct Run {
    pub bench: Bench,
    pub variant: Variant,
    pub workload: Workload,
    pub items: usize,
    pub stats: RunStats,
    pub trace: Option<Vec<TraceEvent>>,
}

/// `cfg` with the extensions of `variant` instantiated.
pub fn variant_config(cfg: &CoreConfig, variant: Variant) -> CoreConfig {
    CoreConfig { extensions: variant.extensions(), ..cfg.clone() }
}

/// Stats, output buffers and (if requested) the trace of one simulation.
pub type SimOutput = (RunStats, Vec<Vec<u32>>, Option<Vec<TraceEvent>>);

/// Simulates an already built kernel and returns stats plus output buffers.
pub fn simulate(built: &BuiltKernel, cfg: &CoreConfig, trace: bool) -> Result<SimOutput, SimError> {
    let mut core = Core::new(cfg.clone())?;
    core.load(&built.image)?;
    if trace {
        core.enable_trace();
    }
    core.launch(built.warps);
    let stats = core.run()?;
    if let Some((r, w)) = core.dmsl().and_then(|d| dmsl::overlapping(d.ranges())) {
        return Err(SimError::Lint(format!(
            "read stream {} of warp {} ({:#x}..{:#x}) overlaps write stream {} of warp {} ({:#x}..{:#x})",
            r.unit, r.warp, r.lo, r.hi, w.unit, w.warp, w.lo, w.hi
        )));
    }
    let outputs = built
        .outputs
        .iter()
        .map(|b| core.memory().read_u32s(b.addr, b.words))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SimError::Load(format!("reading outputs: {e}")))?;
    let trace = trace.then(|| core.take_trace());
    Ok((stats, outputs, trace))
}

/// Runs one variant of a generated problem and checks it against `golden`.
pub fn run_problem(
    problem: &dyn Problem,
    golden: &[Vec<u32>],
    variant: Variant,
    workload: Workload,
    cfg: &CoreConfig,
    trace: bool,
) -> Result<Run, HarnessError> {
    let bench = problem.bench();
    let point = workload.point;
    let vcfg = variant_config(cfg, variant);
    let built = problem.build(variant, &vcfg)?;
    let (stats, outputs, trace) =
        simulate(&built, &vcfg, trace).map_err(|source| HarnessError::Sim { bench, variant, point, source })?;
    for ((buf, got), want) in built.outputs.iter().zip(&outputs).zip(golden) {
        if let Some(index) = (0..want.len()).find(|&i| got[i] != want[i]) {
            return Err(HarnessError::GoldenMismatch {
                bench,
                variant,
                point,
                buffer: buf.name.clone(),
                index,
                expected: want[index],
                got: got[index],
            });
        }
    }
    stats.check().map_err(|reason| HarnessError::Invariant { bench, variant, point, reason })?;
    Ok(Run { bench, variant, workload, items: problem.items(), stats, trace })
}

/// Generates, runs and checks a single benchmark variant.
pub fn run_one(
    bench: Bench,
    variant: Variant,
    workload: Workload,
    cfg: &CoreConfig,
    trace: bool,
) -> Result<Run, HarnessError> {
    if !bench.supports(variant) {
        return Err(kernels::unsupported(bench, variant).into());
    }
    let problem = kernels::problem(bench, &workload, cfg)?;
    let golden = problem.golden();
    run_problem(problem.as_ref(), &golden, variant, workload, cfg, trace)
}

/// One row of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub benchmark: String,
    pub variant: String,
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "C")]
    pub c: usize,
    /// Sweep point, or `mean` / `geomean` for aggregate rows.
    pub point: String,
    pub cycles: f64,
    pub instr_total: f64,
    pub instr_loop: f64,
    pub instr_pred: f64,
    pub instr_mem: f64,
    pub instr_comp: f64,
    pub flops: f64,
    pub utilization: f64,
    pub speedup: f64,
    pub instr_reduction: f64,
}

impl MetricRow {
    pub fn from_run(run: &Run, base: &RunStats, cfg: &CoreConfig) -> Self {
        let s = &run.stats;
        let c = |cat: Category| s.count(cat) as f64;
        MetricRow {
            benchmark: run.bench.name().into(),
            variant: run.variant.name().into(),
            w: cfg.num_warps,
            t: cfg.num_threads,
            p: cfg.cache_ports,
            r: cfg.num_dmsl,
            c: cfg.fifo_credits,
            point: run.workload.point.to_string(),
            cycles: s.cycles as f64,
            instr_total: s.instr_total as f64,
            instr_loop: c(Category::LoopCF),
            instr_pred: c(Category::Predication),
            instr_mem: c(Category::Memory),
            instr_comp: c(Category::Compute),
            flops: s.flops as f64,
            utilization: s.utilization(),
            speedup: base.cycles as f64 / s.cycles as f64,
            instr_reduction: base.instr_total as f64 / s.instr_total as f64,
        }
    }

    pub fn is_aggregate(&self) -> bool {
        self.point == "mean" || self.point == "geomean"
    }

    fn numbers(&self) -> [f64; 10] {
        [
            self.cycles,
            self.instr_total,
            self.instr_loop,
            self.instr_pred,
            self.instr_mem,
            self.instr_comp,
            self.flops,
            self.utilization,
            self.speedup,
            self.instr_reduction,
        ]
    }

    fn with_numbers(&self, point: &str, v: [f64; 10]) -> Self {
        MetricRow {
            point: point.into(),
            cycles: v[0],
            instr_total: v[1],
            instr_loop: v[2],
            instr_pred: v[3],
            instr_mem: v[4],
            instr_comp: v[5],
            flops: v[6],
            utilization: v[7],
            speedup: v[8],
            instr_reduction: v[9],
            ..self.clone()
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Geometric mean; zero if any element is non-positive.
pub fn geomean(xs: &[f64]) -> f64 {
    if xs.is_empty() || xs.iter().any(|x| *x <= 0.0) {
        return 0.0;
    }
    (xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64).exp()
}

/// Arithmetic-mean and geometric-mean rows over per-point rows of one group.
pub fn aggregate(points: &[MetricRow]) -> [MetricRow; 2] {
    let cols: Vec<Vec<f64>> = (0..10).map(|i| points.iter().map(|r| r.numbers()[i]).collect()).collect();
    let m: [f64; 10] = std::array::from_fn(|i| mean(&cols[i]));
    let g: [f64; 10] = std::array::from_fn(|i| geomean(&cols[i]));
    [points[0].with_numbers("mean", m), points[0].with_numbers("geomean", g)]
}

/// What to run in a matrix.
#[derive(Clone, Debug)]
pub struct MatrixSpec {
    pub benches: Vec<Bench>,
    pub variants: Vec<Variant>,
    pub configs: Vec<CoreConfig>,
    /// Sweep points per benchmark; `None` runs the full sweep.
    pub points: Option<usize>,
    pub ragged: bool,
    pub seed: u64,
}

impl MatrixSpec {
    pub fn new(benches: Vec<Bench>, variants: Vec<Variant>, configs: Vec<CoreConfig>, seed: u64) -> Self {
        MatrixSpec { benches, variants, configs, points: None, ragged: false, seed }
    }

    fn sweep(&self, bench: Bench) -> Vec<u32> {
        match self.points {
            Some(n) => bench.sweep_subset(n),
            None => bench.sweep(),
        }
    }
}

/// Runs every (benchmark, config, point) job in parallel. Each job builds the
/// problem once, runs the baseline plus the requested variants and checks
/// each against the golden model. Rows come back sorted by key, with
/// per-point rows followed by the `mean` and `geomean` rows of each group.
pub fn run_matrix(spec: &MatrixSpec) -> Result<MatrixReport, HarnessError> {
    let mut jobs = Vec::new();
    for (ci, cfg) in spec.configs.iter().enumerate() {
        for &bench in &spec.benches {
            for point in spec.sweep(bench) {
                jobs.push((ci, cfg, bench, point));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(ci, cfg, bench, point)| -> Result<Vec<(usize, MetricRow)>, HarnessError> {
            let workload = Workload { point, ragged: spec.ragged, seed: spec.seed };
            let problem = kernels::problem(bench, &workload, cfg)?;
            let golden = problem.golden();
            let base = run_problem(problem.as_ref(), &golden, Variant::Base, workload, cfg, false)?;
            let mut rows = Vec::new();
            for &v in &spec.variants {
                if !bench.supports(v) {
                    continue;
                }
                let run = if v == Variant::Base {
                    base.clone()
                } else {
                    run_problem(problem.as_ref(), &golden, v, workload, cfg, false)?
                };
                rows.push((ci, MetricRow::from_run(&run, &base.stats, cfg)));
            }
            Ok(rows)
        })
        .collect();
    let mut groups: BTreeMap<(usize, usize, usize), Vec<(u32, MetricRow)>> = BTreeMap::new();
    for r in results {
        for (ci, row) in r? {
            let b = Bench::ALL.iter().position(|b| b.name() == row.benchmark).unwrap();
            let v = Variant::ALL.iter().position(|v| v.name() == row.variant).unwrap();
            let p: u32 = row.point.parse().unwrap();
            groups.entry((ci, b, v)).or_default().push((p, row));
        }
    }
    let mut rows = Vec::new();
    for (_, mut g) in groups {
        g.sort_by_key(|(p, _)| *p);
        let pts: Vec<MetricRow> = g.into_iter().map(|(_, r)| r).collect();
        let agg = aggregate(&pts);
        rows.extend(pts);
        rows.extend(agg);
    }
    Ok(MatrixReport { seed: spec.seed, configs: spec.configs.clone(), rows })
}

/// Mean full-variant speedup per configuration over the non-graph benchmarks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalePoint {
    pub warps: usize,
    pub threads: usize,
    pub speedup: f64,
}

/// Benchmarks averaged by the scalability studies.
pub fn scalability_benches() -> Vec<Bench> {
    Bench::ALL.into_iter().filter(|b| !matches!(b, Bench::Vecadd | Bench::GcnAggr)).collect()
}

/// Average full-variant speedup for each `(W, T)` configuration.
pub fn scalability_sweep(
    base: &CoreConfig,
    shapes: &[(usize, usize)],
    benches: &[Bench],
    points: usize,
    seed: u64,
) -> Result<Vec<ScalePoint>, HarnessError> {
    let configs: Vec<CoreConfig> = shapes
        .iter()
        .map(|&(w, t)| CoreConfig { num_warps: w, num_threads: t, ..base.clone() })
        .collect();
    let mut spec = MatrixSpec::new(benches.to_vec(), vec![Variant::Full], configs.clone(), seed);
    spec.points = Some(points);
    let report = run_matrix(&spec)?;
    let mut out = Vec::new();
    for cfg in &configs {
        let speedups: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.w == cfg.num_warps && r.t == cfg.num_threads && r.point == "mean")
            .map(|r| r.speedup)
            .collect();
        out.push(ScalePoint {
            warps: cfg.num_warps,
            threads: cfg.num_threads,
            speedup: mean(&speedups),
        });
    }
    Ok(out)
}

/// Mean cycles of a benchmark's full variant for each port count.
pub fn port_sweep(
    base: &CoreConfig,
    bench: Bench,
    ports: &[usize],
    points: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>, HarnessError> {
    ports
        .par_iter()
        .map(|&p| {
            let cfg = CoreConfig { cache_ports: p, ..base.clone() };
            let mut cycles = Vec::new();
            for point in bench.sweep_subset(points) {
                let run = run_one(bench, Variant::Full, Workload::new(point, seed), &cfg, false)?;
                cycles.push(run.stats.cycles as f64);
            }
            Ok((p, mean(&cycles)))
        })
        .collect()
}

/// Mean full-variant speedup with the workload split evenly over `n`
/// independent cores (no shared cache level), for each `n` in `cores`.
pub fn core_sweep(
    base: &CoreConfig,
    cores: &[usize],
    benches: &[Bench],
    points: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>, HarnessError> {
    let mut out = Vec::new();
    for &n in cores {
        let jobs: Vec<(Bench, u32)> =
            benches.iter().flat_map(|&b| b.sweep_subset(points).into_iter().map(move |p| (b, p))).collect();
        let speedups = jobs
            .par_iter()
            .map(|&(bench, point)| {
                let w = Workload::new((point / n as u32).max(1), seed);
                let problem = kernels::problem(bench, &w, base)?;
                let golden = problem.golden();
                let b = run_problem(problem.as_ref(), &golden, Variant::Base, w, base, false)?;
                let f = run_problem(problem.as_ref(), &golden, Variant::Full, w, base, false)?;
                Ok((bench, b.stats.cycles as f64 / f.stats.cycles as f64))
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let per_bench: Vec<f64> = benches
            .iter()
            .map(|b| mean(&speedups.iter().filter(|(x, _)| x == b).map(|(_, s)| *s).collect::<Vec<_>>()))
            .collect();
        out.push((n, mean(&per_bench)));
    }
    Ok(out)
}
