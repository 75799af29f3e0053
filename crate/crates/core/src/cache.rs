//! Trace-driven multi-level cache simulator with an additive cycle model.
//!
//! Every reference walks the hierarchy from L1 until it hits; each level it
//! misses allocates the block (reads and writes alike). Cycles are one per
//! non-memory instruction plus, for each reference, the latency of the level
//! that served it, main memory included.

use std::collections::HashMap;
use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::trace::TraceEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum Replacement {
    Random { seed: u64 },
    Lru,
    Opt,
}

impl fmt::Display for Replacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Replacement::Random { seed } => write!(f, "random({seed})"),
            Replacement::Lru => f.write_str("lru"),
            Replacement::Opt => f.write_str("opt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LevelConfig {
    pub name: String,
    /// Capacity in bytes.
    pub size: u64,
    pub block_size: u64,
    /// Ways per set; 1 is direct mapped.
    pub associativity: usize,
    pub latency: u64,
    pub replacement: Replacement,
}

impl LevelConfig {
    pub fn sets(&self) -> u64 {
        self.size / (self.block_size * self.associativity as u64)
    }
}

/// A cache hierarchy shared by every logical thread of a trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheConfig {
    pub id: String,
    pub levels: Vec<LevelConfig>,
    pub memory_latency: u64,
}

const KB: u64 = 1024;

impl CacheConfig {
    /// Two-level hierarchy with 32-byte blocks: a direct-mapped L1 (3 cycles)
    /// and an 8-way random-replacement L2 (10 cycles) in front of a
    /// 30-cycle main memory.
    pub fn two_level(id: &str, l1_kb: u64, l2_kb: u64, seed: u64) -> Self {
        CacheConfig {
            id: id.to_string(),
            levels: vec![
                LevelConfig {
                    name: "L1".into(),
                    size: l1_kb * KB,
                    block_size: 32,
                    associativity: 1,
                    latency: 3,
                    replacement: Replacement::Lru,
                },
                LevelConfig {
                    name: "L2".into(),
                    size: l2_kb * KB,
                    block_size: 32,
                    associativity: 8,
                    latency: 10,
                    replacement: Replacement::Random { seed },
                },
            ],
            memory_latency: 30,
        }
    }

    /// The reference hierarchy: 64 KB L1 (one tile), 512 KB L2 (eight tiles).
    pub fn loki(seed: u64) -> Self {
        Self::two_level("loki", 64, 512, seed)
    }

    /// Built-in hierarchies by name: `loki`, `small` (16 KB / 128 KB),
    /// `medium` (32 KB / 512 KB), `large` (64 KB / 960 KB).
    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "loki" | "default" => Ok(Self::loki(seed)),
            "small" => Ok(Self::two_level("small", 16, 128, seed)),
            "medium" => Ok(Self::two_level("medium", 32, 512, seed)),
            "large" => Ok(Self::two_level("large", 64, 960, seed)),
            _ => Err(Error::Config(format!(
                "unknown cache preset `{name}` (expected loki, small, medium or large)"
            ))),
        }
    }

    /// Replaces every random-replacement seed, giving each level its own stream.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for (k, level) in self.levels.iter_mut().enumerate() {
            if let Replacement::Random { seed: s } = &mut level.replacement {
                *s = rng::derive(seed, k as u64);
            }
        }
        self
    }

    pub fn with_policy(mut self, level: usize, replacement: Replacement) -> Self {
        self.levels[level].replacement = replacement;
        self
    }

    pub fn uses_opt(&self) -> bool {
        self.levels.iter().any(|l| l.replacement == Replacement::Opt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config(format!("cache config `{}` has no levels", self.id)));
        }
        for l in &self.levels {
            if !l.block_size.is_power_of_two() {
                return Err(Error::Config(format!(
                    "{}: block size {} is not a power of two",
                    l.name, l.block_size
                )));
            }
            if l.associativity == 0 {
                return Err(Error::Config(format!("{}: associativity must be at least 1", l.name)));
            }
            let set_bytes = l.block_size * l.associativity as u64;
            if l.size == 0 || l.size % set_bytes != 0 {
                return Err(Error::Config(format!(
                    "{}: size {} is not a multiple of block size x associativity ({set_bytes})",
                    l.name, l.size
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelStats {
    pub hits: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpcPoint {
    /// Instruction count at the end of the window.
    pub window_end: u64,
    pub recent_ipc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub levels: Vec<LevelStats>,
    /// References served by main memory (misses of the last level).
    pub memory_accesses: u64,
    pub nonmem_ticks: u64,
    /// Sum of every instruction's cost over all threads.
    pub cycles: u64,
    /// The same sum split by issuing thread.
    pub thread_cycles: Vec<u64>,
    pub ipc_series: Option<Vec<IpcPoint>>,
}

impl CacheStats {
    pub fn refs(&self) -> u64 {
        self.levels.first().map_or(0, |l| l.hits + l.misses)
    }

    pub fn instructions(&self) -> u64 {
        self.refs() + self.nonmem_ticks
    }

    pub fn misses(&self, level: usize) -> u64 {
        self.levels.get(level).map_or(0, |l| l.misses)
    }

    /// Cycles of the slowest thread: the run's estimated execution time when
    /// threads proceed in parallel. Equals `cycles` for one thread.
    pub fn makespan(&self) -> u64 {
        self.thread_cycles.iter().copied().max().unwrap_or(0)
    }

    /// `ticks + sum(hits x latency)` with main memory as the last level.
    pub fn recompute_cycles(&self, config: &CacheConfig) -> u64 {
        self.nonmem_ticks
            + self
                .levels
                .iter()
                .zip(&config.levels)
                .map(|(s, c)| s.hits * c.latency)
                .sum::<u64>()
            + self.memory_accesses * config.memory_latency
    }

    /// Checks that every level's accesses equal the previous level's misses.
    pub fn is_conserved(&self) -> bool {
        let chained = self.levels.windows(2).all(|w| w[1].hits + w[1].misses == w[0].misses);
        chained && self.levels.last().is_none_or(|l| l.misses == self.memory_accesses)
    }
}

const INVALID: u64 = u64::MAX;

/// State of one cache level.
#[derive(Debug, Clone)]
struct Level {
    sets: u64,
    ways: usize,
    block_shift: u32,
    set_mask: Option<u64>,
    policy: Replacement,
    blocks: Vec<u64>,
    /// LRU: last-use stamp. OPT: position of the next use.
    meta: Vec<u64>,
    clock: u64,
    rng: rng::Rng,
}

impl Level {
    fn new(cfg: &LevelConfig) -> Self {
        let sets = cfg.sets();
        let seed = match cfg.replacement {
            Replacement::Random { seed } => seed,
            _ => 0,
        };
        Level {
            sets,
            ways: cfg.associativity,
            block_shift: cfg.block_size.trailing_zeros(),
            set_mask: sets.is_power_of_two().then(|| sets - 1),
            policy: cfg.replacement,
            blocks: vec![INVALID; (sets as usize) * cfg.associativity],
            meta: vec![0; (sets as usize) * cfg.associativity],
            clock: 0,
            rng: rng::seeded(seed),
        }
    }

    #[inline]
    fn block_of(&self, addr: u64) -> u64 {
        addr >> self.block_shift
    }

    /// Looks up `block`, allocating it on a miss. `next_use` is consulted by
    /// OPT only. Returns whether the access hit.
    #[inline]
    fn access(&mut self, block: u64, next_use: u64) -> bool {
        let set = match self.set_mask {
            Some(m) => block & m,
            None => block % self.sets,
        } as usize;
        let base = set * self.ways;
        self.clock += 1;
        if self.ways == 1 {
            if self.blocks[base] == block {
                return true;
            }
            self.blocks[base] = block;
            return false;
        }
        let ways = &mut self.blocks[base..base + self.ways];
        if let Some(w) = ways.iter().position(|&b| b == block) {
            match self.policy {
                Replacement::Lru => self.meta[base + w] = self.clock,
                Replacement::Opt => self.meta[base + w] = next_use,
                Replacement::Random { .. } => {}
            }
            return true;
        }
        let victim = match ways.iter().position(|&b| b == INVALID) {
            Some(w) => w,
            None => {
                let meta = &self.meta[base..base + self.ways];
                match self.policy {
                    Replacement::Random { .. } => self.rng.random_range(0..self.ways),
                    // Stamps are unique, so the first minimum is the only one.
                    Replacement::Lru => argmin_first(meta),
                    Replacement::Opt => argmax_first(meta),
                }
            }
        };
        self.blocks[base + victim] = block;
        self.meta[base + victim] = match self.policy {
            Replacement::Opt => next_use,
            _ => self.clock,
        };
        false
    }
}

fn argmin_first(v: &[u64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = k;
        }
    }
    best
}

fn argmax_first(v: &[u64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Accumulates cycles and the windowed IPC series.
#[derive(Debug, Clone)]
struct Accounting {
    cycles: u64,
    ticks: u64,
    thread_cycles: Vec<u64>,
    window: Option<u64>,
    in_window: u64,
    window_cycles: u64,
    instructions: u64,
    series: Vec<IpcPoint>,
}

impl Accounting {
    fn new(window: Option<u64>) -> Self {
        Accounting {
            cycles: 0,
            ticks: 0,
            thread_cycles: Vec::new(),
            window,
            in_window: 0,
            window_cycles: 0,
            instructions: 0,
            series: Vec::new(),
        }
    }

    #[inline]
    fn charge_thread(&mut self, thread: u16, cycles: u64) {
        let t = thread as usize;
        if t >= self.thread_cycles.len() {
            self.thread_cycles.resize(t + 1, 0);
        }
        self.thread_cycles[t] += cycles;
        self.cycles += cycles;
    }

    #[inline]
    fn reference(&mut self, thread: u16, cost: u64) {
        self.charge_thread(thread, cost);
        if self.window.is_some() {
            self.window_step(1, cost);
        }
    }

    #[inline]
    fn ticks(&mut self, thread: u16, count: u64) {
        self.ticks += count;
        self.charge_thread(thread, count);
        if let Some(w) = self.window {
            // Each tick costs one cycle, so a batch splits cleanly.
            let mut left = count;
            while left > 0 {
                let take = left.min(w - self.in_window);
                self.window_step(take, take);
                left -= take;
            }
        }
    }

    #[inline]
    fn window_step(&mut self, instrs: u64, cycles: u64) {
        self.in_window += instrs;
        self.window_cycles += cycles;
        self.instructions += instrs;
        if Some(self.in_window) == self.window {
            self.close_window();
        }
    }

    fn close_window(&mut self) {
        if self.in_window > 0 {
            self.series.push(IpcPoint {
                window_end: self.instructions,
                recent_ipc: self.in_window as f64 / self.window_cycles as f64,
            });
        }
        self.in_window = 0;
        self.window_cycles = 0;
    }
}

/// Streaming simulator for random and LRU hierarchies.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: CacheConfig,
    levels: Vec<Level>,
    stats: Vec<LevelStats>,
    memory_accesses: u64,
    latencies: Vec<u64>,
    acct: Accounting,
    record: Option<Vec<u8>>,
}

impl Simulator {
    pub fn new(config: &CacheConfig) -> Result<Self> {
        config.validate()?;
        if config.uses_opt() {
            return Err(Error::Config(
                "OPT replacement needs the whole trace up front; use simulate_opt on a buffered trace".into(),
            ));
        }
        Ok(Self::build(config))
    }

    fn build(config: &CacheConfig) -> Self {
        let mut latencies: Vec<u64> = config.levels.iter().map(|l| l.latency).collect();
        latencies.push(config.memory_latency);
        Simulator {
            config: config.clone(),
            levels: config.levels.iter().map(Level::new).collect(),
            stats: vec![LevelStats::default(); config.levels.len()],
            memory_accesses: 0,
            latencies,
            acct: Accounting::new(None),
            record: None,
        }
    }

    /// Also produce an IPC point every `window` instructions.
    pub fn with_ipc_window(mut self, window: u64) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("IPC window must be at least one instruction".into()));
        }
        self.acct.window = Some(window);
        Ok(self)
    }

    /// Remember, for every reference, the index of the level that served it
    /// (`levels.len()` = main memory).
    pub fn recording(mut self) -> Self {
        self.record = Some(Vec::new());
        self
    }

    #[inline]
    pub fn feed(&mut self, ev: TraceEvent) {
        match ev {
            TraceEvent::Mem(m) => {
                let mut served = self.levels.len();
                for (k, level) in self.levels.iter_mut().enumerate() {
                    let block = level.block_of(m.address);
                    if level.access(block, 0) {
                        self.stats[k].hits += 1;
                        served = k;
                        break;
                    }
                    self.stats[k].misses += 1;
                }
                if served == self.levels.len() {
                    self.memory_accesses += 1;
                }
                if let Some(r) = &mut self.record {
                    r.push(served as u8);
                }
                self.acct.reference(m.thread, self.latencies[served]);
            }
            TraceEvent::Ticks { thread, count } => self.acct.ticks(thread, count as u64),
        }
    }

    pub fn finish(self) -> CacheStats {
        self.finish_recorded().0
    }

    pub fn finish_recorded(mut self) -> (CacheStats, Vec<u8>) {
        let ipc_series = self.acct.window.map(|_| {
            self.acct.close_window();
            std::mem::take(&mut self.acct.series)
        });
        let stats = CacheStats {
            levels: self.stats,
            memory_accesses: self.memory_accesses,
            nonmem_ticks: self.acct.ticks,
            cycles: self.acct.cycles,
            thread_cycles: self.acct.thread_cycles,
            ipc_series,
        };
        debug_assert_eq!(stats.cycles, stats.recompute_cycles(&self.config));
        (stats, self.record.unwrap_or_default())
    }
}

/// Runs a streamed trace through a hierarchy without OPT levels.
pub fn simulate(trace: impl IntoIterator<Item = TraceEvent>, config: &CacheConfig) -> Result<CacheStats> {
    let mut sim = Simulator::new(config)?;
    for ev in trace {
        sim.feed(ev);
    }
    Ok(sim.finish())
}

/// Like [`simulate`], also returning the serving level of every reference.
pub fn simulate_recorded(
    trace: impl IntoIterator<Item = TraceEvent>,
    config: &CacheConfig,
) -> Result<(CacheStats, Vec<u8>)> {
    let mut sim = Simulator::new(config)?.recording();
    for ev in trace {
        sim.feed(ev);
    }
    Ok(sim.finish_recorded())
}

/// IPC over consecutive windows of `window` instructions. A trailing partial
/// window is reported with its own length.
pub fn windowed_ipc(
    trace: impl IntoIterator<Item = TraceEvent>,
    config: &CacheConfig,
    window: u64,
) -> Result<Vec<IpcPoint>> {
    let stats = if config.uses_opt() {
        let buffered = BufferedTrace::collect(trace, None)?;
        simulate_opt_windowed(&buffered, config, Some(window))?.0
    } else {
        let mut sim = Simulator::new(config)?.with_ipc_window(window)?;
        for ev in trace {
            sim.feed(ev);
        }
        sim.finish()
    };
    Ok(stats.ipc_series.unwrap_or_default())
}

/// A fully materialised trace, needed by OPT's look-ahead.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BufferedTrace {
    events: Vec<TraceEvent>,
}

impl BufferedTrace {
    /// Default cap on buffered events (16 bytes each).
    pub const DEFAULT_BOUND: usize = 64 << 20;

    /// Collects `trace`, failing once more than `bound` events arrive.
    pub fn collect(trace: impl IntoIterator<Item = TraceEvent>, bound: Option<usize>) -> Result<Self> {
        let bound = bound.unwrap_or(Self::DEFAULT_BOUND);
        let mut events = Vec::new();
        for ev in trace {
            if events.len() == bound {
                return Err(Error::Config(format!(
                    "trace exceeds the OPT buffering bound of {bound} events; set an instruction limit"
                )));
            }
            events.push(ev);
        }
        Ok(BufferedTrace { events })
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }
}

impl From<Vec<TraceEvent>> for BufferedTrace {
    fn from(events: Vec<TraceEvent>) -> Self {
        BufferedTrace { events }
    }
}

/// Simulates a buffered trace; any level may use OPT, which evicts the block
/// whose next use in that level's own access stream lies farthest ahead
/// (never reused counts as infinitely far; ties go to the lowest way).
pub fn simulate_opt(trace: &BufferedTrace, config: &CacheConfig) -> Result<CacheStats> {
    simulate_opt_windowed(trace, config, None).map(|(s, _)| s)
}

/// [`simulate_opt`] plus the serving level of every reference.
pub fn simulate_opt_recorded(trace: &BufferedTrace, config: &CacheConfig) -> Result<(CacheStats, Vec<u8>)> {
    simulate_opt_windowed(trace, config, None)
}

fn simulate_opt_windowed(
    trace: &BufferedTrace,
    config: &CacheConfig,
    window: Option<u64>,
) -> Result<(CacheStats, Vec<u8>)> {
    config.validate()?;
    if window == Some(0) {
        return Err(Error::Config("IPC window must be at least one instruction".into()));
    }
    let addrs: Vec<u64> = trace
        .events
        .iter()
        .filter_map(|e| match e {
            TraceEvent::Mem(m) => Some(m.address),
            _ => None,
        })
        .collect();
    let n_levels = config.levels.len();
    let mut served = vec![n_levels as u8; addrs.len()];
    let mut stats = vec![LevelStats::default(); n_levels];

    // Level by level: each level sees exactly the references every level
    // above it missed.
    let mut stream: Vec<u32> = (0..addrs.len() as u32).collect();
    for (k, cfg) in config.levels.iter().enumerate() {
        let mut level = Level::new(cfg);
        let blocks: Vec<u64> = stream.iter().map(|&r| level.block_of(addrs[r as usize])).collect();
        let next = if cfg.replacement == Replacement::Opt {
            next_uses(&blocks)
        } else {
            Vec::new()
        };
        let mut missed = Vec::new();
        for (pos, (&r, &b)) in stream.iter().zip(&blocks).enumerate() {
            let nu = next.get(pos).copied().unwrap_or(0);
            if level.access(b, nu) {
                stats[k].hits += 1;
                served[r as usize] = k as u8;
            } else {
                stats[k].misses += 1;
                missed.push(r);
            }
        }
        stream = missed;
    }

    let mut latencies: Vec<u64> = config.levels.iter().map(|l| l.latency).collect();
    latencies.push(config.memory_latency);
    let mut acct = Accounting::new(window);
    let mut r = 0;
    for ev in &trace.events {
        match *ev {
            TraceEvent::Mem(m) => {
                acct.reference(m.thread, latencies[served[r] as usize]);
                r += 1;
            }
            TraceEvent::Ticks { thread, count } => acct.ticks(thread, count as u64),
        }
    }
    let ipc_series = window.map(|_| {
        acct.close_window();
        std::mem::take(&mut acct.series)
    });
    let stats = CacheStats {
        levels: stats,
        memory_accesses: stream.len() as u64,
        nonmem_ticks: acct.ticks,
        cycles: acct.cycles,
        thread_cycles: acct.thread_cycles,
        ipc_series,
    };
    Ok((stats, served))
}

/// Position of the next occurrence of each entry, `u64::MAX` when none.
fn next_uses(blocks: &[u64]) -> Vec<u64> {
    let mut next = vec![u64::MAX; blocks.len()];
    let mut seen: HashMap<u64, u64> = HashMap::new();
    for (pos, &b) in blocks.iter().enumerate().rev() {
        if let Some(&later) = seen.get(&b) {
            next[pos] = later;
        }
        seen.insert(b, pos as u64);
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{AccessKind, MemRef};
    use rand::Rng;

    fn read(address: u64) -> TraceEvent {
        TraceEvent::Mem(MemRef {
            address,
            kind: AccessKind::Read,
            thread: 0,
        })
    }

    fn ticks(count: u32) -> TraceEvent {
        TraceEvent::Ticks { thread: 0, count }
    }

    /// One set of two ways, 32-byte blocks, in front of memory.
    fn toy(policy: Replacement) -> CacheConfig {
        CacheConfig {
            id: "toy".into(),
            levels: vec![LevelConfig {
                name: "L1".into(),
                size: 64,
                block_size: 32,
                associativity: 2,
                latency: 1,
                replacement: policy,
            }],
            memory_latency: 10,
        }
    }

    #[test]
    fn cycle_formula_with_reference_latencies() {
        let stats = CacheStats {
            levels: vec![LevelStats { hits: 5, misses: 3 }, LevelStats { hits: 2, misses: 1 }],
            memory_accesses: 1,
            nonmem_ticks: 10,
            ..CacheStats::default()
        };
        assert_eq!(stats.recompute_cycles(&CacheConfig::loki(1)), 75);
        assert!(stats.is_conserved());
    }

    #[test]
    fn repeated_reference_misses_once() {
        let trace = std::iter::repeat_n(read(4096), 100);
        let s = simulate(trace, &CacheConfig::loki(1)).unwrap();
        assert_eq!(s.levels[0], LevelStats { hits: 99, misses: 1 });
        assert_eq!(s.levels[1], LevelStats { hits: 0, misses: 1 });
        assert_eq!(s.cycles, 99 * 3 + 30);
    }

    #[test]
    fn streaming_rejects_opt() {
        let cfg = CacheConfig::loki(1).with_policy(1, Replacement::Opt);
        assert!(matches!(Simulator::new(&cfg), Err(Error::Config(_))));
        assert!(simulate(std::iter::empty(), &cfg).is_err());
    }

    #[test]
    fn invalid_geometry() {
        let mut cfg = CacheConfig::loki(1);
        cfg.levels[0].block_size = 24;
        assert!(cfg.validate().is_err());
        let mut cfg = CacheConfig::loki(1);
        cfg.levels[1].size = 1000;
        assert!(cfg.validate().is_err());
        assert!(CacheConfig::preset("large", 1).unwrap().validate().is_ok());
        assert!(CacheConfig::preset("huge", 1).is_err());
    }

    #[test]
    fn thrash_pattern_favours_opt() {
        let trace: Vec<TraceEvent> = (0..30).map(|k| read((k % 3) * 32)).collect();
        let lru = simulate(trace.clone(), &toy(Replacement::Lru)).unwrap();
        let opt = simulate_opt(&trace.clone().into(), &toy(Replacement::Opt)).unwrap();
        assert_eq!(lru.misses(0), 30);
        assert!(opt.misses(0) < lru.misses(0));
        // Cold misses for A and B, then every even position misses.
        assert_eq!(opt.misses(0), 2 + 14);
    }

    #[test]
    fn buffered_and_streamed_agree_without_opt() {
        let mut r = rng::seeded(3);
        let trace: Vec<TraceEvent> = (0..5000)
            .map(|_| {
                if r.random_bool(0.2) {
                    ticks(r.random_range(1..5))
                } else {
                    read(r.random_range(0..1 << 16))
                }
            })
            .collect();
        let mut cfg = CacheConfig::two_level("t", 1, 4, 0).with_seed(9);
        cfg.levels[0].associativity = 2;
        let a = simulate_recorded(trace.clone(), &cfg).unwrap();
        let b = simulate_opt_recorded(&trace.into(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_replacement_is_deterministic() {
        let mut r = rng::seeded(8);
        let trace: Vec<TraceEvent> = (0..20000).map(|_| read(r.random_range(0..1 << 20))).collect();
        let cfg = CacheConfig::two_level("t", 4, 16, 0).with_seed(77);
        assert_eq!(simulate(trace.clone(), &cfg).unwrap(), simulate(trace, &cfg).unwrap());
    }

    #[test]
    fn all_tick_trace_has_unit_ipc() {
        let trace = vec![ticks(7), ticks(3), ticks(12), ticks(1)];
        let series = windowed_ipc(trace, &CacheConfig::loki(1), 4).unwrap();
        assert_eq!(series.len(), 6);
        assert!(series.iter().all(|p| p.recent_ipc == 1.0));
        assert_eq!(series.last().unwrap().window_end, 23);
    }

    #[test]
    fn whole_trace_window_is_overall_ipc() {
        let trace = vec![read(0), ticks(4), read(0), read(64), ticks(2)];
        let cfg = CacheConfig::loki(1);
        let s = simulate(trace.clone(), &cfg).unwrap();
        let series = windowed_ipc(trace, &cfg, s.instructions()).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[0].recent_ipc, s.instructions() as f64 / s.cycles as f64);
        assert!(windowed_ipc(std::iter::empty(), &cfg, 0).is_err());
    }

    #[test]
    fn thread_cycles_split_the_total() {
        let trace = vec![
            TraceEvent::Mem(MemRef {
                address: 0,
                kind: AccessKind::Read,
                thread: 1,
            }),
            TraceEvent::Ticks { thread: 0, count: 5 },
            TraceEvent::Mem(MemRef {
                address: 0,
                kind: AccessKind::Write,
                thread: 0,
            }),
        ];
        let s = simulate(trace, &CacheConfig::loki(1)).unwrap();
        assert_eq!(s.thread_cycles, vec![5 + 3, 30]);
        assert_eq!(s.makespan(), 30);
        assert_eq!(s.cycles, 38);
    }

    #[test]
    fn next_use_positions() {
        assert_eq!(next_uses(&[1, 2, 1, 3, 2]), vec![2, 4, u64::MAX, u64::MAX, u64::MAX]);
    }

    #[test]
    fn opt_bound_is_enforced() {
        let trace = std::iter::repeat_n(read(0), 11);
        assert!(BufferedTrace::collect(trace.clone(), Some(10)).is_err());
        assert_eq!(
            BufferedTrace::collect(trace.take(10), Some(10)).unwrap().events().len(),
            10
        );
    }
}
