use std::process::{Command, Output};

fn simtflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simtflow")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn run_prints_stats() {
    let o = simtflow(&["run", "--bench", "saxpy", "--variant", "full", "--warps", "8", "--threads", "16", "--ports", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains("cycles") && out.contains("speedup"));
}

#[test]
fn gcn_streaming_is_a_config_error() {
    let o = simtflow(&["run", "--bench", "gcn_aggr", "--variant", "full"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("no `full` variant"));
}

#[test]
fn bad_flags_exit_with_config_code() {
    assert_eq!(code(&simtflow(&["run", "--bench", "saxpy", "--threads", "64"])), 2);
    assert_eq!(code(&simtflow(&["run", "--bench", "nope"])), 2);
    assert_eq!(code(&simtflow(&["run", "--bench", "saxpy", "--set", "bogus=1"])), 2);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("core.cfg");
    std::fs::write(&cfg, "# small core\nwarps = 2\nthreads = 4\nports = 1\n").unwrap();
    let json = dir.path().join("run.json");
    let o = simtflow(&[
        "run", "--bench", "vecadd", "--config", cfg.to_str().unwrap(), "--threads", "8", "--json", json.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v["config"]["num_warps"], 2);
    assert_eq!(v["config"]["num_threads"], 8);
    assert_eq!(v["config"]["cache_ports"], 1);
    assert_eq!(v["row"]["T"], 8);
}

#[test]
fn reproduce_writes_metric_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("fig6.csv");
    let o = simtflow(&["reproduce", "--paper-fig", "6", "--points", "2", "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "benchmark,variant,W,T,P,R,C,point,cycles,instr_total,instr_loop,instr_pred,instr_mem,instr_comp,flops,utilization,speedup,instr_reduction"
    );
    // 7 benchmarks x 4 variants + gcn x 3, each with 2 points, mean and geomean
    assert_eq!(lines.count(), (7 * 4 + 3) * 4);
    assert!(text.lines().any(|l| l.starts_with("saxpy,full,") && l.contains(",mean,")));
}

#[test]
fn sweep_csv_is_reproducible() {
    let run = || simtflow(&["run", "--bench", "knn", "--variant", "cfm", "--sweep", "--warps", "2", "--threads", "8"]).stdout;
    let a = run();
    assert!(!a.is_empty());
    assert_eq!(a, run());
}

#[test]
fn trace_has_category_tags() {
    let o = simtflow(&["trace", "--bench", "vecadd", "--variant", "full", "--warps", "2", "--threads", "4"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("cycle,warp,event,pc,mask,category\n"));
    for kind in ["Fetch", "Issue", "Retire"] {
        assert!(out.contains(kind), "{kind}");
    }
    assert!(out.contains(",comp"));
}

#[test]
fn assembly_files_run() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("k.s");
    std::fs::write(&src, "addi a0, zero, 3\nloop:\naddi a0, a0, -1\nbnez a0, loop\ntmc zero\n").unwrap();
    let o = simtflow(&["run", "--kernel", src.to_str().unwrap(), "--warps", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(&src, "frobnicate a0\n").unwrap();
    assert_eq!(code(&simtflow(&["run", "--kernel", src.to_str().unwrap()])), 4);
}

#[test]
fn faulting_kernel_is_an_invariant_failure() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("k.s");
    std::fs::write(&src, "lui a0, 0xfffff\nlw a1, 0(a0)\ntmc zero\n").unwrap();
    assert_eq!(code(&simtflow(&["run", "--kernel", src.to_str().unwrap()])), 4);
}

#[test]
fn validate_passes() {
    let o = simtflow(&["validate", "--points", "1", "--bench", "sgemv", "--ragged"]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().filter(|l| l.starts_with("ok")).count(), 4);
}
