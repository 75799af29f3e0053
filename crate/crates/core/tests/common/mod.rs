//! Helpers shared by the integration tests.
#![allow(dead_code)]

use loopnest::cache::{CacheConfig, LevelConfig, Replacement};
use loopnest::rng;
use loopnest::trace::{AccessKind, MemRef, TraceEvent};
use rand::Rng as _;

/// Straightforward set-associative model: one `Vec` of ways per set, LRU
/// kept as an explicit recency list. Written without reference to the
/// production simulator's data layout.
pub struct NaiveLevel {
    sets: Vec<Vec<Option<u64>>>,
    recency: Vec<Vec<u64>>,
    block_size: u64,
    policy: Replacement,
    rng: rng::Rng,
}

impl NaiveLevel {
    pub fn new(cfg: &LevelConfig) -> Self {
        let n = cfg.size / (cfg.block_size * cfg.associativity as u64);
        let seed = match cfg.replacement {
            Replacement::Random { seed } => seed,
            _ => 0,
        };
        NaiveLevel {
            sets: vec![vec![None; cfg.associativity]; n as usize],
            recency: vec![Vec::new(); n as usize],
            block_size: cfg.block_size,
            policy: cfg.replacement,
            rng: rng::seeded(seed),
        }
    }

    pub fn access(&mut self, addr: u64) -> bool {
        let block = addr / self.block_size;
        let s = (block % self.sets.len() as u64) as usize;
        let ways = &mut self.sets[s];
        let order = &mut self.recency[s];
        if ways.contains(&Some(block)) {
            order.retain(|&b| b != block);
            order.push(block);
            return true;
        }
        let slot = match ways.iter().position(Option::is_none) {
            Some(w) => w,
            None if ways.len() == 1 => 0,
            None => match self.policy {
                Replacement::Lru => {
                    let oldest = order.remove(0);
                    ways.iter().position(|&b| b == Some(oldest)).unwrap()
                }
                Replacement::Random { .. } => self.rng.random_range(0..ways.len()),
                Replacement::Opt => panic!("naive model has no look-ahead"),
            },
        };
        if let Some(old) = ways[slot] {
            order.retain(|&b| b != old);
        }
        ways[slot] = Some(block);
        order.push(block);
        false
    }
}

/// Serving level of every reference plus total cycles.
pub fn naive_simulate(trace: &[TraceEvent], config: &CacheConfig) -> (Vec<u8>, u64) {
    let mut levels: Vec<NaiveLevel> = config.levels.iter().map(NaiveLevel::new).collect();
    let mut served = Vec::new();
    let mut cycles = 0;
    for ev in trace {
        match ev {
            TraceEvent::Mem(m) => {
                let mut at = levels.len();
                for (k, level) in levels.iter_mut().enumerate() {
                    if level.access(m.address) {
                        at = k;
                        break;
                    }
                }
                cycles += config.levels.get(at).map_or(config.memory_latency, |l| l.latency);
                served.push(at as u8);
            }
            TraceEvent::Ticks { count, .. } => cycles += *count as u64,
        }
    }
    (served, cycles)
}

pub fn level(name: &str, size: u64, ways: usize, latency: u64, replacement: Replacement) -> LevelConfig {
    LevelConfig {
        name: name.into(),
        size,
        block_size: 32,
        associativity: ways,
        latency,
        replacement,
    }
}

/// Small two-level hierarchy so that random traces exercise evictions.
pub fn tiny_config(l1: Replacement, l1_ways: usize, l2: Replacement) -> CacheConfig {
    CacheConfig {
        id: "tiny".into(),
        levels: vec![level("L1", 512, l1_ways, 2, l1), level("L2", 4096, 4, 9, l2)],
        memory_latency: 40,
    }
}

/// `n` references mixing a hot region, a strided sweep and cold addresses,
/// with occasional tick batches.
pub fn random_trace(seed: u64, n: usize) -> Vec<TraceEvent> {
    let mut r = rng::seeded(seed);
    let mut out = Vec::with_capacity(n + n / 8);
    let mut sweep = 0u64;
    for _ in 0..n {
        let address = match r.random_range(0..10) {
            0..=4 => r.random_range(0..1024u64) * 4,
            5..=7 => {
                sweep = (sweep + 36) % 32768;
                sweep
            }
            _ => r.random_range(0..1u64 << 16) * 4,
        };
        let kind = if r.random_bool(0.2) {
            AccessKind::Write
        } else {
            AccessKind::Read
        };
        out.push(TraceEvent::Mem(MemRef {
            address,
            kind,
            thread: 0,
        }));
        if r.random_bool(0.1) {
            out.push(TraceEvent::Ticks {
                thread: 0,
                count: r.random_range(1..8),
            });
        }
    }
    out
}

/// The 50 configurations paired with the 50 seeded traces: policies and L1
/// associativity rotate with the seed.
pub fn oracle_case(seed: u64) -> (Vec<TraceEvent>, CacheConfig) {
    let policies = [Replacement::Lru, Replacement::Random { seed: seed * 7 + 1 }];
    let l1 = policies[(seed % 2) as usize];
    let l2 = policies[((seed / 2) % 2) as usize];
    let l1_ways = [1, 2, 4][(seed % 3) as usize];
    (random_trace(seed, 10_000), tiny_config(l1, l1_ways, l2))
}

/// Cycles from per-level counts, main memory as the last level.
pub fn cycles_identity(stats: &loopnest::CacheStats, config: &CacheConfig) -> u64 {
    let hits: u64 = stats
        .levels
        .iter()
        .zip(&config.levels)
        .map(|(s, l)| s.hits * l.latency)
        .sum();
    stats.nonmem_ticks + hits + stats.memory_accesses * config.memory_latency
}
