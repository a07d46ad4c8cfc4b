use clap::{Args, Parser, Subcommand};
use simtflow::config::{ConfigError, CoreConfig};
use simtflow::harness::{
    self, run_matrix, scalability_benches, write_csv, write_json, HarnessError, MatrixSpec, MetricRow,
};
use simtflow::isa::{assemble, Category};
use simtflow::kernels::{Bench, KernelError, Variant, Workload};
use simtflow::pipeline::{Core, SimError, TraceEvent};
use simtflow::stats::RunStats;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "simtflow", version, about = "Cycle-level SIMT core simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one benchmark variant (or an assembly file) and print its stats.
    Run(RunArgs),
    /// Regenerate the data behind one of the evaluation figures.
    Reproduce(ReproduceArgs),
    /// Run one benchmark variant and write its fetch/issue/retire log.
    Trace(TraceArgs),
    /// Check every benchmark variant against its host model.
    Validate(ValidateArgs),
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// key=value file applied before the flags below.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    warps: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    ports: Option<usize>,
    #[arg(long)]
    dmsls: Option<usize>,
    #[arg(long)]
    credits: Option<usize>,
    #[arg(long)]
    loop_levels: Option<usize>,
    #[arg(long, value_name = "BYTES")]
    cache_size: Option<usize>,
    #[arg(long)]
    cache_banks: Option<usize>,
    #[arg(long, value_name = "BYTES")]
    cache_line: Option<usize>,
    #[arg(long)]
    cache_ways: Option<usize>,
    #[arg(long)]
    cache_mshrs: Option<usize>,
    #[arg(long, value_name = "CYCLES")]
    cache_hit_latency: Option<u64>,
    #[arg(long, value_name = "CYCLES")]
    cache_miss_latency: Option<u64>,
    #[arg(long)]
    max_cycles: Option<u64>,
    /// Extra key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<CoreConfig, Failure> {
        let mut cfg = CoreConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            cfg.apply_kv_text(&text)?;
        }
        let flags: [(&str, Option<String>); 14] = [
            ("num_warps", self.warps.map(|v| v.to_string())),
            ("num_threads", self.threads.map(|v| v.to_string())),
            ("cache_ports", self.ports.map(|v| v.to_string())),
            ("num_dmsl", self.dmsls.map(|v| v.to_string())),
            ("fifo_credits", self.credits.map(|v| v.to_string())),
            ("loop_levels", self.loop_levels.map(|v| v.to_string())),
            ("cache_size", self.cache_size.map(|v| v.to_string())),
            ("cache_banks", self.cache_banks.map(|v| v.to_string())),
            ("line_size", self.cache_line.map(|v| v.to_string())),
            ("associativity", self.cache_ways.map(|v| v.to_string())),
            ("mshr_per_bank", self.cache_mshrs.map(|v| v.to_string())),
            ("hit_latency", self.cache_hit_latency.map(|v| v.to_string())),
            ("miss_latency", self.cache_miss_latency.map(|v| v.to_string())),
            ("max_cycles", self.max_cycles.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.set {
            cfg.apply_kv_text(kv)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "kernel")]
    bench: Option<Bench>,
    #[arg(long, default_value = "full")]
    variant: Variant,
    /// Assembly file to run instead of a built-in benchmark.
    #[arg(long, value_name = "PATH", conflicts_with = "bench")]
    kernel: Option<PathBuf>,
    /// Problem size in multiples of warps x threads (default: second sweep point).
    #[arg(long)]
    point: Option<u32>,
    /// Run every sweep point and report per-point rows plus averages.
    #[arg(long, conflicts_with = "point")]
    sweep: bool,
    /// Trim the problem so the last warp iteration is partial.
    #[arg(long)]
    ragged: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ReproduceArgs {
    /// 6: per-kernel metrics, 8: warp/thread scalability, 9: port sweep.
    #[arg(long = "fig", alias = "paper-fig", value_parser = ["6", "8", "9"])]
    fig: String,
    /// Sweep points per benchmark (default: all).
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    bench: Bench,
    #[arg(long, default_value = "full")]
    variant: Variant,
    #[arg(long)]
    point: Option<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Defaults to stdout.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct ValidateArgs {
    /// Limit to one benchmark.
    #[arg(long)]
    bench: Option<Bench>,
    /// Sweep points per benchmark.
    #[arg(long, default_value_t = 3)]
    points: usize,
    /// Also run ragged problem sizes.
    #[arg(long)]
    ragged: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    cfg: ConfigArgs,
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn io(path: &Path, e: io::Error) -> Self {
        Failure { code: 1, msg: format!("{}: {e}", path.display()) }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure { code: 2, msg: e.to_string() }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = if matches!(e, SimError::Config(_)) { 2 } else { 4 };
        Failure { code, msg: e.to_string() }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let code = match &e {
            HarnessError::Kernel(KernelError::Asm(_)) => 4,
            HarnessError::Kernel(_) => 2,
            HarnessError::GoldenMismatch { .. } => 3,
            HarnessError::Sim { source: SimError::Config(_), .. } => 2,
            HarnessError::Sim { .. } | HarnessError::Invariant { .. } => 4,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure { code: 1, msg: e.to_string() }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

fn csv_to(path: Option<&Path>, rows: &[MetricRow]) -> Result<(), Failure> {
    let res = match path {
        Some(p) => write_csv(rows, create(p)?),
        None => write_csv(rows, io::stdout().lock()),
    };
    res.map_err(|e| Failure { code: 1, msg: e.to_string() })
}

fn json_to<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
    writeln!(w)?;
    Ok(())
}

fn write_trace<W: Write>(mut out: W, trace: &[TraceEvent]) -> io::Result<()> {
    writeln!(out, "cycle,warp,event,pc,mask,category")?;
    for e in trace {
        writeln!(
            out,
            "{},{},{:?},{:#010x},{:#010x},{}",
            e.cycle,
            e.warp,
            e.kind,
            e.pc,
            e.mask,
            e.category.tag()
        )?;
    }
    out.flush()
}

fn print_stats(title: &str, s: &RunStats, base: Option<&RunStats>) {
    println!("{title}");
    println!("  {:<20}{}", "cycles", s.cycles);
    println!("  {:<20}{}", "instructions", s.instr_total);
    for c in Category::ALL {
        println!("  {:<20}{}", format!("  {}", c.tag()), s.count(c));
    }
    println!("  {:<20}{}", "flops", s.flops);
    println!("  {:<20}{:.4}", "utilization", s.utilization());
    println!("  {:<20}{}", "bank conflicts", s.mem.bank_conflicts);
    println!("  {:<20}{} / {}", "cache hits/misses", s.mem.hits, s.mem.misses);
    println!("  {:<20}{}", "scoreboard stalls", s.stall_scoreboard);
    println!("  {:<20}{}", "stream data stalls", s.stall_dmsl_data);
    if let Some(b) = base {
        println!("  {:<20}{:.3}", "speedup", b.cycles as f64 / s.cycles as f64);
        println!("  {:<20}{:.3}", "instr reduction", b.instr_total as f64 / s.instr_total as f64);
    }
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    let cfg = a.cfg.resolve()?;
    if let Some(path) = &a.kernel {
        return run_file(path, &cfg, &a);
    }
    let bench = a.bench.expect("clap enforces --bench");
    if !bench.supports(a.variant) {
        return Err(HarnessError::from(KernelError::UnsupportedVariant { bench, variant: a.variant }).into());
    }
    if a.sweep {
        let mut spec = MatrixSpec::new(vec![bench], vec![a.variant], vec![cfg], a.seed);
        spec.ragged = a.ragged;
        let report = run_matrix(&spec)?;
        csv_to(a.csv.as_deref(), &report.rows)?;
        if let Some(p) = &a.json {
            write_json(&report, create(p)?).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
        }
        return Ok(());
    }
    let point = a.point.unwrap_or(bench.sweep()[1]);
    let w = Workload { point, ragged: a.ragged, seed: a.seed };
    let run = harness::run_one(bench, a.variant, w, &cfg, a.trace.is_some())?;
    let base = if a.variant == Variant::Base {
        run.clone()
    } else {
        harness::run_one(bench, Variant::Base, w, &cfg, false)?
    };
    print_stats(&format!("{bench}/{} {} point {point} ({} items)", a.variant, cfg.id(), run.items), &run.stats, Some(&base.stats));
    let row = MetricRow::from_run(&run, &base.stats, &cfg);
    if let Some(p) = &a.csv {
        csv_to(Some(p), std::slice::from_ref(&row))?;
    }
    if let Some(p) = &a.json {
        json_to(p, &serde_json::json!({ "config": cfg, "seed": a.seed, "row": row, "stats": run.stats }))?;
    }
    if let (Some(p), Some(t)) = (&a.trace, &run.trace) {
        write_trace(create(p)?, t)?;
    }
    Ok(())
}

/// Runs a hand-written kernel on all warps; no output checking.
fn run_file(path: &Path, cfg: &CoreConfig, a: &RunArgs) -> Result<(), Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let image = assemble(&src).map_err(|e| Failure { code: 4, msg: format!("{}: {e}", path.display()) })?;
    let mut core = Core::new(cfg.clone())?;
    core.load(&image)?;
    if a.trace.is_some() {
        core.enable_trace();
    }
    core.launch(cfg.num_warps);
    let stats = core.run()?;
    stats.check().map_err(|msg| Failure { code: 4, msg })?;
    print_stats(&format!("{} {}", path.display(), cfg.id()), &stats, None);
    if let Some(p) = &a.json {
        json_to(p, &serde_json::json!({ "config": cfg, "stats": stats }))?;
    }
    if let Some(p) = &a.trace {
        write_trace(create(p)?, &core.take_trace())?;
    }
    Ok(())
}

fn cmd_reproduce(a: ReproduceArgs) -> Result<(), Failure> {
    let cfg = a.cfg.resolve()?;
    let csv = a.csv.as_deref();
    match a.fig.as_str() {
        "6" => {
            let mut spec = MatrixSpec::new(Bench::ALL.to_vec(), Variant::ALL.to_vec(), vec![cfg], a.seed);
            spec.points = a.points;
            let report = run_matrix(&spec)?;
            csv_to(csv, &report.rows)?;
            if let Some(p) = &a.json {
                write_json(&report, create(p)?).map_err(|e| Failure { code: 1, msg: e.to_string() })?;
            }
        }
        "8" => {
            let mut shapes = Vec::new();
            for t in [4, 8, 16, 32] {
                for w in [2, 4, 8] {
                    shapes.push((w, t));
                }
            }
            let pts = harness::scalability_sweep(&cfg, &shapes, &scalability_benches(), a.points.unwrap_or(5), a.seed)?;
            let cores = harness::core_sweep(&cfg, &[1, 2, 4], &scalability_benches(), a.points.unwrap_or(5), a.seed)?;
            let mut out: Box<dyn Write> = match csv {
                Some(p) => Box::new(create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            writeln!(out, "cores,W,T,speedup")?;
            for p in &pts {
                writeln!(out, "1,{},{},{}", p.warps, p.threads, p.speedup)?;
            }
            for (n, s) in &cores {
                writeln!(out, "{n},{},{},{s}", cfg.num_warps, cfg.num_threads)?;
            }
            out.flush()?;
            if let Some(p) = &a.json {
                json_to(p, &serde_json::json!({ "config": cfg, "seed": a.seed, "shapes": pts, "cores": cores }))?;
            }
        }
        _ => {
            let mut out: Box<dyn Write> = match csv {
                Some(p) => Box::new(create(p)?),
                None => Box::new(io::stdout().lock()),
            };
            writeln!(out, "benchmark,P,cycles")?;
            let mut all = Vec::new();
            for bench in [Bench::Saxpy, Bench::Sgemv, Bench::Sgemm] {
                let sweep = harness::port_sweep(&cfg, bench, &[1, 2, 3], a.points.unwrap_or(5), a.seed)?;
                for (p, c) in &sweep {
                    writeln!(out, "{bench},{p},{c}")?;
                }
                all.push((bench.name(), sweep));
            }
            out.flush()?;
            if let Some(p) = &a.json {
                json_to(p, &serde_json::json!({ "config": cfg, "seed": a.seed, "ports": all }))?;
            }
        }
    }
    Ok(())
}

fn cmd_trace(a: TraceArgs) -> Result<(), Failure> {
    let cfg = a.cfg.resolve()?;
    let point = a.point.unwrap_or(a.bench.sweep()[0]);
    let run = harness::run_one(a.bench, a.variant, Workload::new(point, a.seed), &cfg, true)?;
    let trace = run.trace.unwrap_or_default();
    match &a.trace {
        Some(p) => write_trace(create(p)?, &trace)?,
        None => write_trace(io::stdout().lock(), &trace)?,
    }
    Ok(())
}

fn cmd_validate(a: ValidateArgs) -> Result<(), Failure> {
    let cfg = a.cfg.resolve()?;
    let benches = a.bench.map_or_else(|| Bench::ALL.to_vec(), |b| vec![b]);
    let mut first: Option<Failure> = None;
    for bench in benches {
        for &v in bench.variants() {
            let mut checked = 0;
            let mut err = None;
            'points: for point in bench.sweep_subset(a.points) {
                for ragged in [false, true].into_iter().take(1 + a.ragged as usize) {
                    let w = Workload { point, ragged, seed: a.seed };
                    match harness::run_one(bench, v, w, &cfg, false) {
                        Ok(_) => checked += 1,
                        Err(e) => {
                            err = Some(Failure::from(e));
                            break 'points;
                        }
                    }
                }
            }
            match err {
                None => println!("ok    {bench}/{v} ({checked} runs)"),
                Some(f) => {
                    println!("FAIL  {bench}/{v}: {}", f.msg);
                    first.get_or_insert(f);
                }
            }
        }
    }
    first.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Reproduce(a) => cmd_reproduce(a),
        Cmd::Trace(a) => cmd_trace(a),
        Cmd::Validate(a) => cmd_validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let golden = HarnessError::GoldenMismatch {
            bench: Bench::Saxpy,
            variant: Variant::Full,
            point: 4,
            buffer: "y".into(),
            index: 0,
            expected: 1,
            got: 2,
        };
        assert_eq!(Failure::from(golden).code, 3);
        let inv = HarnessError::Invariant { bench: Bench::Knn, variant: Variant::Cfm, point: 4, reason: "x".into() };
        assert_eq!(Failure::from(inv).code, 4);
        assert_eq!(Failure::from(SimError::CycleLimit(10)).code, 4);
        assert_eq!(Failure::from(ConfigError::UnknownKey("k".into())).code, 2);
    }
}
