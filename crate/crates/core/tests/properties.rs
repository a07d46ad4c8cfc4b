use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simtflow::config::CoreConfig;
use simtflow::harness::oracle::{LoopProgram, StreamProgram};
use simtflow::harness::run_one;
use simtflow::kernels::{Bench, Variant, Workload};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn loop_fetches_match_interpreter(seed in any::<u64>()) {
        let p = LoopProgram::random(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(p.check(), Ok(()));
    }

    #[test]
    fn streams_deliver_load_values(seed in any::<u64>()) {
        let p = StreamProgram::random(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(p.check(), Ok(()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn saxpy_variants_agree_on_any_shape(
        w in 1usize..=4,
        t in prop::sample::select(vec![4usize, 8, 16, 32]),
        point in 1u32..12,
        ragged in any::<bool>(),
        credits in prop::sample::select(vec![1usize, 2, 4, 8]),
        ports in 1usize..=3,
        seed in any::<u64>(),
    ) {
        let cfg = CoreConfig { num_warps: w, num_threads: t, fifo_credits: credits, cache_ports: ports, ..CoreConfig::default() };
        let work = Workload { point, ragged, seed };
        // run_one checks every output word against the host model
        for v in Variant::ALL {
            let run = run_one(Bench::Saxpy, v, work, &cfg, false);
            prop_assert!(run.is_ok(), "{}: {}", v, run.unwrap_err());
            prop_assert!(run.unwrap().stats.utilization() <= 1.0);
        }
    }
}
