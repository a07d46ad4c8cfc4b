use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtflow::harness::oracle::LoopProgram;
use simtflow::harness::simulate;
use simtflow::{Bench, Variant};
use simtflow_bench::fixture;

fn kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    for (bench, point) in [(Bench::Saxpy, 24), (Bench::Sgemm, 8), (Bench::Knn, 24)] {
        for v in [Variant::Base, Variant::Full] {
            let (built, cfg) = fixture(bench, v, point);
            let cycles = simulate(&built, &cfg, false).unwrap().0.cycles;
            g.throughput(Throughput::Elements(cycles));
            g.bench_with_input(BenchmarkId::new(bench.name(), v.name()), &built, |b, k| {
                b.iter(|| simulate(k, &cfg, false).unwrap())
            });
        }
    }
    g.finish();
}

fn assembler(c: &mut Criterion) {
    let prog = LoopProgram::random(&mut ChaCha8Rng::seed_from_u64(3));
    c.bench_function("assemble/loop_program", |b| b.iter(|| prog.build().unwrap()));
    c.bench_function("build/conv2d_base", |b| b.iter(|| fixture(Bench::Conv2d, Variant::Base, 4)));
}

criterion_group!(benches, kernels, assembler);
criterion_main!(benches);
