use iabc_core::conditions::{check_partition_condition, Mode};
use iabc_core::harness::random_uniform;
use iabc_core::simnet::{
    run_simulation, trace_metrics, ByzantineBehavior, Outcome, SchedulerStrategy, SimConfig, Trace,
};
use iabc_core::Digraph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn k6_config(seed: u64, behavior: ByzantineBehavior, scheduler: SchedulerStrategy) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut c = SimConfig::new(Digraph::complete(6).unwrap(), 1, inputs);
    c.fault_set = [5].into();
    c.byzantine = behavior;
    c.scheduler = scheduler;
    c.seed = seed;
    c.epsilon = 1e-7;
    c.max_rounds = 5_000;
    c
}

fn honest_range(t: &Trace) -> (f64, f64) {
    (t.lower(0), t.upper(0))
}

fn arb_behavior() -> impl Strategy<Value = ByzantineBehavior> {
    prop_oneof![
        Just(ByzantineBehavior::Silent),
        (-10.0f64..10.0).prop_map(|value| ByzantineBehavior::IdenticalWrong { value }),
        Just(ByzantineBehavior::Random {
            min: -50.0,
            max: 50.0
        }),
        Just(ByzantineBehavior::Split {
            low_targets: [0, 1].into(),
            high_targets: [2, 3, 4].into(),
            low: -3.0,
            high: 4.0,
            mid: 0.5,
        }),
    ]
}

fn arb_scheduler() -> impl Strategy<Value = SchedulerStrategy> {
    prop_oneof![
        Just(SchedulerStrategy::InOrder),
        Just(SchedulerStrategy::Synchronous),
        (any::<bool>(), 1u64..200).prop_map(|(per_link_fifo, max_delay)| {
            SchedulerStrategy::Random {
                per_link_fifo,
                max_delay,
            }
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), b in arb_behavior(), s in arb_scheduler()) {
        let c = k6_config(seed, b, s);
        let a = run_simulation(&c).unwrap();
        let b = run_simulation(&c).unwrap();
        prop_assert_eq!(a.values_csv_string(), b.values_csv_string());
        prop_assert_eq!(a.deliveries, b.deliveries);
    }

    #[test]
    fn fault_free_values_stay_in_initial_range(seed in any::<u64>(), b in arb_behavior(), s in arb_scheduler()) {
        // lock-step waits on every in-neighbour, so a silent sender stalls it
        let lock_step_silent = b == ByzantineBehavior::Silent && s == SchedulerStrategy::Synchronous;
        let t = run_simulation(&k6_config(seed, b, s)).unwrap();
        let (lo, hi) = honest_range(&t);
        for row in &t.values {
            for &v in row {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        prop_assert!(trace_metrics(&t).all_valid);
        if lock_step_silent {
            prop_assert_eq!(&t.outcome, &Outcome::Stalled { round: 0 });
        } else {
            prop_assert!(matches!(t.outcome, Outcome::Converged { .. }), "{:?}", t.outcome);
        }
    }

    #[test]
    fn random_scheduler_respects_delay_cap(seed in any::<u64>(), cap in 1u64..60, fifo in any::<bool>()) {
        let s = SchedulerStrategy::Random { per_link_fifo: fifo, max_delay: cap };
        let t = run_simulation(&k6_config(seed, ByzantineBehavior::Silent, s)).unwrap();
        // one forced delivery per step; a capped message waits at most cap plus
        // the other capped messages queued ahead of it
        let emitted_per_step = 25;
        prop_assert!(t.max_delay <= cap + emitted_per_step, "max delay {}", t.max_delay);
        for d in &t.deliveries {
            prop_assert!(d.delivered_at > d.sent_at);
        }
    }

    #[test]
    fn per_link_fifo_preserves_link_order(seed in any::<u64>()) {
        let s = SchedulerStrategy::Random { per_link_fifo: true, max_delay: 10_000 };
        let t = run_simulation(&k6_config(seed, ByzantineBehavior::Silent, s)).unwrap();
        let mut last = std::collections::HashMap::new();
        for d in &t.deliveries {
            let prev = last.insert((d.sender, d.receiver), d.sent_at);
            if let Some(p) = prev {
                prop_assert!(p <= d.sent_at);
            }
        }
    }
}

/// Every fault-free run on a graph that passes the asynchronous condition
/// stays valid and converges.
#[test]
fn random_passing_graphs_converge() {
    let mut runs = 0;
    for seed in 0..40u64 {
        let g = random_uniform(7, 0.95, seed).unwrap();
        if !check_partition_condition(&g, 1, Mode::Async)
            .unwrap()
            .passed()
        {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut c = SimConfig::new(g, 1, inputs);
        c.fault_set = [(seed % 7) as usize].into();
        c.byzantine = ByzantineBehavior::Random {
            min: -5.0,
            max: 5.0,
        };
        c.seed = seed;
        c.epsilon = 1e-6;
        let t = run_simulation(&c).unwrap();
        assert!(trace_metrics(&t).all_valid);
        assert!(
            matches!(t.outcome, Outcome::Converged { .. }),
            "{:?}",
            t.outcome
        );
        runs += 1;
    }
    assert!(runs >= 5, "only {runs} passing graphs sampled");
}
