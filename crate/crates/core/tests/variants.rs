use simtflow::config::CoreConfig;
use simtflow::harness::{run_one, simulate, variant_config};
use simtflow::isa::{decode, Category, KernelImage};
use simtflow::kernels::{problem, Bench, Variant, Workload};
use simtflow::pipeline::{TraceEvent, TraceKind};

fn shape(w: usize, t: usize) -> CoreConfig {
    CoreConfig { num_warps: w, num_threads: t, ..CoreConfig::default() }
}

fn all_variants_match(cfg: &CoreConfig, points: usize, ragged: bool, skip: &[Bench]) {
    for bench in Bench::ALL.into_iter().filter(|b| !skip.contains(b)) {
        for point in bench.sweep_subset(points) {
            let w = Workload { point, ragged, seed: 11 };
            for &v in bench.variants() {
                if let Err(e) = run_one(bench, v, w, cfg, false) {
                    panic!("{bench}/{v} W{} T{} point {point}: {e}", cfg.num_warps, cfg.num_threads);
                }
            }
        }
    }
}

#[test]
fn variants_agree_on_default_core() {
    all_variants_match(&CoreConfig::default(), 3, false, &[]);
}

#[test]
fn variants_agree_with_ragged_tails() {
    all_variants_match(&CoreConfig::default(), 3, true, &[]);
}

#[test]
fn variants_agree_on_small_cores() {
    all_variants_match(&shape(2, 4), 2, true, &[]);
    all_variants_match(&shape(4, 8), 2, false, &[]);
}

#[test]
fn variants_agree_on_wide_warps() {
    // gcn maps its 16 features onto lanes
    all_variants_match(&shape(4, 32), 2, true, &[Bench::GcnAggr]);
}

#[test]
fn gcn_rejects_wide_warps() {
    assert!(run_one(Bench::GcnAggr, Variant::Base, Workload::new(8, 1), &shape(4, 32), false).is_err());
}

/// Decoded text and mask of every compute or memory fetch, per warp.
fn work_stream(bench: Bench, v: Variant, w: Workload, cfg: &CoreConfig) -> Vec<Vec<(String, u32)>> {
    let vcfg = variant_config(cfg, v);
    let p = problem(bench, &w, &vcfg).unwrap();
    let built = p.build(v, &vcfg).unwrap();
    let (_, _, trace) = simulate(&built, &vcfg, true).unwrap();
    let mut out = vec![Vec::new(); cfg.num_warps];
    for e in trace.unwrap() {
        if e.kind == TraceKind::Fetch && matches!(e.category, Category::Compute | Category::Memory) {
            out[e.warp].push((text_at(&built.image, e.pc), e.mask));
        }
    }
    out
}

fn text_at(image: &KernelImage, pc: u32) -> String {
    decode(image.text[image.index_of(pc).unwrap()]).unwrap().to_string()
}

#[test]
fn hardware_loops_fetch_the_same_work_as_software_loops() {
    let cfg = shape(4, 8);
    for bench in [Bench::Vecadd, Bench::Saxpy, Bench::Sgemv, Bench::GcnAggr] {
        for ragged in [false, true] {
            let w = Workload { point: 4, ragged, seed: 3 };
            let base = work_stream(bench, Variant::Base, w, &cfg);
            assert_eq!(work_stream(bench, Variant::Cfm, w, &cfg), base, "{bench} cfm ragged={ragged}");
            assert_eq!(work_stream(bench, Variant::CfmLps, w, &cfg), base, "{bench} cfm+lps ragged={ragged}");
        }
    }
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = CoreConfig::default();
    for bench in [Bench::Saxpy, Bench::Sgemm, Bench::Knn] {
        let w = Workload::new(bench.sweep()[1], 5);
        let a = run_one(bench, Variant::Full, w, &cfg, false).unwrap();
        let b = run_one(bench, Variant::Full, w, &cfg, false).unwrap();
        assert_eq!(a.stats, b.stats, "{bench}");
    }
}

fn issued(trace: &[TraceEvent]) -> u64 {
    trace.iter().filter(|e| e.kind == TraceKind::Issue).count() as u64
}

#[test]
fn counters_match_trace() {
    let cfg = CoreConfig::default();
    for bench in Bench::ALL {
        let w = Workload::new(bench.sweep()[0], 2);
        let base = run_one(bench, Variant::Base, w, &cfg, true).unwrap();
        let best = *bench.variants().last().unwrap();
        let run = run_one(bench, best, w, &cfg, true).unwrap();
        let (bt, rt) = (issued(base.trace.as_ref().unwrap()), issued(run.trace.as_ref().unwrap()));
        assert_eq!(bt, base.stats.instr_total, "{bench}");
        assert_eq!(rt, run.stats.instr_total, "{bench}");
        let by_cat: u64 = Category::ALL.iter().map(|&c| run.stats.count(c)).sum();
        assert_eq!(by_cat, run.stats.instr_total);
        assert!(run.stats.utilization() <= 1.0);
    }
}

#[test]
fn sgemm_conflicts_more_than_saxpy() {
    let cfg = CoreConfig::default();
    let per_access = |bench: Bench, point: u32| {
        let r = run_one(bench, Variant::Full, Workload::new(point, 9), &cfg, false).unwrap();
        let m = &r.stats.mem;
        m.bank_conflicts as f64 / (m.hits + m.misses).max(1) as f64
    };
    // both footprints are roughly 3 x 64 x 128 words
    assert!(per_access(Bench::Sgemm, 8) > per_access(Bench::Saxpy, 64));
}

/// Static instructions from the `loop` label through the last loop
/// instruction (the back-edge, or `loop_end` for hardware loops).
fn loop_body(image: &KernelImage) -> Vec<Category> {
    let start = image.index_of(image.symbol("loop").unwrap()).unwrap();
    let end = match image.symbol("loop_end") {
        Some(pc) => image.index_of(pc).unwrap(),
        None => (start..image.text.len()).rev().find(|&i| image.categories[i] == Category::LoopCF).unwrap(),
    };
    image.categories[start..=end].to_vec()
}

fn built_loop(bench: Bench, v: Variant) -> Vec<Category> {
    let cfg = variant_config(&CoreConfig::default(), v);
    let p = problem(bench, &Workload::new(4, 1), &cfg).unwrap();
    loop_body(&p.build(v, &cfg).unwrap().image)
}

#[test]
fn vecadd_loop_has_one_compute_instruction() {
    for v in Variant::ALL {
        let body = built_loop(Bench::Vecadd, v);
        assert_eq!(body.iter().filter(|&&c| c == Category::Compute).count(), 1, "{v}");
    }
    let base = built_loop(Bench::Vecadd, Variant::Base);
    assert_eq!(base.len(), 15);
    assert!(base.contains(&Category::LoopCF) && base.contains(&Category::Predication));
    assert_eq!(built_loop(Bench::Vecadd, Variant::Full), vec![Category::Compute]);
}

#[test]
fn full_saxpy_loop_is_pure_compute() {
    let body = built_loop(Bench::Saxpy, Variant::Full);
    assert_eq!(body, vec![Category::Compute]);
    // memory work stays in the preamble whatever the problem size
    let cfg = CoreConfig::default();
    let mem = |point| {
        let r = run_one(Bench::Saxpy, Variant::Full, Workload::new(point, 1), &cfg, false).unwrap();
        (r.stats.count(Category::Memory), r.stats.count(Category::LoopCF), r.stats.count(Category::Predication))
    };
    let (small, large) = (mem(4), mem(64));
    assert_eq!(small, large);
}
