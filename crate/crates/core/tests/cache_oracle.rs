mod common;

use common::*;
use loopnest::cache::{simulate_opt_recorded, simulate_recorded, BufferedTrace, Replacement};
use loopnest::trace::{AccessKind, MemRef, TraceEvent};
use proptest::prelude::*;

#[test]
fn matches_naive_model_access_by_access() {
    for seed in 0..50 {
        let (trace, config) = oracle_case(seed);
        let (stats, served) = simulate_recorded(trace.iter().copied(), &config).unwrap();
        let (want, cycles) = naive_simulate(&trace, &config);
        assert_eq!(served, want, "seed {seed}");
        assert_eq!(stats.cycles, cycles, "seed {seed}");
        assert_eq!(stats.cycles, cycles_identity(&stats, &config));
    }
}

#[test]
fn opt_never_loses_at_the_level_it_replaces() {
    for seed in 0..50 {
        let (trace, base) = oracle_case(seed);
        let base = if base.levels[0].associativity == 1 {
            tiny_config(base.levels[0].replacement, 2, base.levels[1].replacement)
        } else {
            base
        };
        let buffered = BufferedTrace::from(trace);
        let plain = loopnest::simulate_opt(&buffered, &base).unwrap();
        for lvl in 0..2 {
            let opt = loopnest::simulate_opt(&buffered, &base.clone().with_policy(lvl, Replacement::Opt)).unwrap();
            assert!(
                opt.levels[lvl].misses <= plain.levels[lvl].misses,
                "seed {seed} level {lvl}"
            );
        }
    }
}

fn same_set_cycle(n: usize) -> Vec<TraceEvent> {
    // 4 KB of L2 in 4 ways of 32 B blocks: 32 sets, so a 1 KB stride maps
    // to one set. Three blocks cycle through a two-way L1 set as well.
    (0..n)
        .map(|k| {
            TraceEvent::Mem(MemRef {
                address: (k % 3) as u64 * 1024,
                kind: AccessKind::Read,
                thread: 0,
            })
        })
        .collect()
}

#[test]
fn thrash_pattern_separates_opt() {
    let trace = BufferedTrace::from(same_set_cycle(300));
    let l2_off = |p| {
        let mut c = tiny_config(p, 2, Replacement::Lru);
        c.levels.truncate(1);
        c
    };
    let opt = loopnest::simulate_opt(&trace, &l2_off(Replacement::Opt)).unwrap();
    let lru = loopnest::simulate_opt(&trace, &l2_off(Replacement::Lru)).unwrap();
    let rnd = loopnest::simulate_opt(&trace, &l2_off(Replacement::Random { seed: 3 })).unwrap();
    assert_eq!(lru.levels[0].misses, 300);
    assert!(opt.levels[0].misses < rnd.levels[0].misses);
    assert!(rnd.levels[0].misses < lru.levels[0].misses);
    // compulsory misses, then one miss every other access
    assert_eq!(opt.levels[0].misses, 2 + 149);
}

#[test]
fn recorded_opt_serving_levels_agree_with_counts() {
    let (trace, config) = oracle_case(4);
    let config = config.with_policy(1, Replacement::Opt);
    let (stats, served) = simulate_opt_recorded(&BufferedTrace::from(trace), &config).unwrap();
    assert_eq!(served.iter().filter(|&&s| s == 0).count() as u64, stats.levels[0].hits);
    assert_eq!(served.iter().filter(|&&s| s == 2).count() as u64, stats.memory_accesses);
    assert!(stats.is_conserved());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hits_plus_misses_conserve_references(seed in 0u64..10_000, n in 1usize..2000, ways in prop::sample::select(vec![1usize, 2, 4])) {
        let trace = random_trace(seed, n);
        let config = tiny_config(Replacement::Random { seed }, ways, Replacement::Lru);
        let (stats, _) = simulate_recorded(trace.iter().copied(), &config).unwrap();
        prop_assert_eq!(stats.refs(), n as u64);
        prop_assert_eq!(stats.levels[0].misses, stats.levels[1].hits + stats.levels[1].misses);
        prop_assert_eq!(stats.levels[1].misses, stats.memory_accesses);
        prop_assert_eq!(stats.cycles, cycles_identity(&stats, &config));
    }

    #[test]
    fn lru_is_inclusive_of_smaller_lru(seed in 0u64..10_000) {
        // LRU has the stack property: a bigger fully associative cache
        // never misses more on the same stream.
        let trace = random_trace(seed, 3000);
        let fa = |bytes: u64| loopnest::CacheConfig {
            id: "fa".into(),
            levels: vec![level("L1", bytes, (bytes / 32) as usize, 1, Replacement::Lru)],
            memory_latency: 10,
        };
        let small = loopnest::simulate(trace.iter().copied(), &fa(256)).unwrap();
        let big = loopnest::simulate(trace.iter().copied(), &fa(1024)).unwrap();
        prop_assert!(big.levels[0].misses <= small.levels[0].misses);
    }
}
