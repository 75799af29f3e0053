//! Reuse maps: addresses renamed by first touch, and working-set size over
//! a sliding window.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

/// Default sliding window, in accesses.
pub const DEFAULT_WINDOW: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReusePoint {
    pub seq: u64,
    pub address_rank: u64,
    pub block_rank: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WorkingSet {
    pub window: usize,
    /// Largest number of distinct blocks in any full window.
    pub peak: usize,
    /// Mean over all full windows (or the whole trace when shorter).
    pub mean: f64,
}

/// Streaming renamer and working-set tracker.
#[derive(Debug, Clone)]
pub struct ReuseMapper {
    offset_bits: u32,
    window: usize,
    addr_rank: HashMap<u64, u64>,
    block_rank: HashMap<u64, u64>,
    recent: VecDeque<u64>,
    live: HashMap<u64, u32>,
    seq: u64,
    peak: usize,
    sum: f64,
    samples: u64,
}

impl ReuseMapper {
    pub fn new(offset_bits: u32, window: usize) -> Self {
        ReuseMapper {
            offset_bits,
            window: window.max(1),
            addr_rank: HashMap::new(),
            block_rank: HashMap::new(),
            recent: VecDeque::new(),
            live: HashMap::new(),
            seq: 0,
            peak: 0,
            sum: 0.0,
            samples: 0,
        }
    }

    pub fn push(&mut self, address: u64) -> ReusePoint {
        let next = self.addr_rank.len() as u64;
        let address_rank = *self.addr_rank.entry(address).or_insert(next);
        let block = address >> self.offset_bits;
        let next = self.block_rank.len() as u64;
        let block_rank = *self.block_rank.entry(block).or_insert(next);

        self.recent.push_back(block);
        *self.live.entry(block).or_insert(0) += 1;
        if self.recent.len() > self.window {
            let old = self.recent.pop_front().expect("window is non-empty");
            let n = self.live.get_mut(&old).expect("tracked block");
            *n -= 1;
            if *n == 0 {
                self.live.remove(&old);
            }
        }
        if self.recent.len() == self.window {
            self.peak = self.peak.max(self.live.len());
            self.sum += self.live.len() as f64;
            self.samples += 1;
        }
        let p = ReusePoint {
            seq: self.seq,
            address_rank,
            block_rank,
        };
        self.seq += 1;
        p
    }

    pub fn distinct_addresses(&self) -> usize {
        self.addr_rank.len()
    }

    pub fn distinct_blocks(&self) -> usize {
        self.block_rank.len()
    }

    pub fn working_set(&self) -> WorkingSet {
        if self.samples == 0 {
            // Trace shorter than the window: the whole trace is one window.
            return WorkingSet {
                window: self.window,
                peak: self.live.len(),
                mean: self.live.len() as f64,
            };
        }
        WorkingSet {
            window: self.window,
            peak: self.peak,
            mean: self.sum / self.samples as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReuseMap {
    pub points: Vec<ReusePoint>,
    pub distinct_addresses: usize,
    pub distinct_blocks: usize,
    pub working_set: WorkingSet,
}

pub fn reuse_map(addresses: impl IntoIterator<Item = u64>, offset_bits: u32, window: usize) -> ReuseMap {
    let mut m = ReuseMapper::new(offset_bits, window);
    let points = addresses.into_iter().map(|a| m.push(a)).collect();
    ReuseMap {
        points,
        distinct_addresses: m.distinct_addresses(),
        distinct_blocks: m.distinct_blocks(),
        working_set: m.working_set(),
    }
}
