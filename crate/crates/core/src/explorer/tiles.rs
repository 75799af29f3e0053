//! Trading compute tiles for shared L2 capacity on a fixed-size chip.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, LevelConfig, Replacement};
use crate::conv::Permutation;
use crate::error::{Error, Result};
use crate::permindex::lex_index;
use crate::rng;
use crate::trace::{TraceOptions, DEFAULT_BODY_COST};

use super::{simulate_run, NamedLayer};

pub const THREADS_PER_TILE: usize = 8;
/// Private memory each compute tile contributes to the L1 level.
pub const L1_KB_PER_TILE: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    pub compute_tiles: usize,
    pub l2_tiles: usize,
    pub total_tiles: usize,
}

impl TileConfig {
    pub fn new(compute_tiles: usize, l2_tiles: usize, total_tiles: usize) -> Result<Self> {
        if compute_tiles == 0 || l2_tiles == 0 {
            return Err(Error::Domain(
                "a split needs at least one compute and one L2 tile".into(),
            ));
        }
        if compute_tiles + l2_tiles > total_tiles {
            return Err(Error::Domain(format!(
                "{compute_tiles} compute + {l2_tiles} L2 tiles exceed the {total_tiles} available"
            )));
        }
        Ok(TileConfig {
            compute_tiles,
            l2_tiles,
            total_tiles,
        })
    }

    pub fn is_full(&self) -> bool {
        self.compute_tiles + self.l2_tiles == self.total_tiles
    }

    pub fn threads(&self) -> usize {
        self.compute_tiles * THREADS_PER_TILE
    }

    pub fn l2_kb(&self, bank_kb_per_tile: u64) -> u64 {
        self.l2_tiles as u64 * bank_kb_per_tile
    }
}

/// Every split with no idle tile: `c` compute tiles and `total - c` L2 tiles.
pub fn full_utilization_splits(total_tiles: usize) -> Result<Vec<TileConfig>> {
    if total_tiles < 2 {
        return Err(Error::Domain(format!("need at least 2 tiles, got {total_tiles}")));
    }
    (1..total_tiles)
        .map(|c| TileConfig::new(c, total_tiles - c, total_tiles))
        .collect()
}

/// Hierarchy for a split: the compute tiles' memories form a direct-mapped
/// L1, the remaining tiles an 8-way random-replacement L2.
pub fn tile_cache_config(split: &TileConfig, bank_kb_per_tile: u64, seed: u64) -> CacheConfig {
    let kb = 1024;
    CacheConfig {
        id: format!("tiles-c{:02}-l{:02}", split.compute_tiles, split.l2_tiles),
        levels: vec![
            LevelConfig {
                name: "L1".into(),
                size: split.compute_tiles as u64 * L1_KB_PER_TILE * kb,
                block_size: 32,
                associativity: 1,
                latency: 3,
                replacement: Replacement::Lru,
            },
            LevelConfig {
                name: "L2".into(),
                size: split.l2_kb(bank_kb_per_tile) * kb,
                block_size: 32,
                associativity: 8,
                latency: 10,
                replacement: Replacement::Random {
                    seed: rng::derive(seed, 1),
                },
            },
        ],
        memory_latency: 30,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileOptions {
    pub instr_limit: Option<u64>,
    pub partial_sums: bool,
    pub seed: u64,
}

impl Default for TileOptions {
    fn default() -> Self {
        TileOptions {
            instr_limit: Some(100_000_000),
            partial_sums: true,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileResult {
    pub layer_id: String,
    pub perm_lex: usize,
    pub compute_tiles: usize,
    pub l2_tiles: usize,
    pub threads: usize,
    pub l2_kb: u64,
    pub cycles: u64,
    pub l2_misses: u64,
}

/// One simulation per full-utilisation split of `total_tiles`.
pub fn tile_sweep(
    layer: &NamedLayer,
    perm: Permutation,
    total_tiles: usize,
    bank_kb_per_tile: u64,
    opts: &TileOptions,
) -> Result<Vec<TileResult>> {
    let splits = full_utilization_splits(total_tiles)?;
    splits
        .par_iter()
        .map(|split| {
            let config = tile_cache_config(split, bank_kb_per_tile, opts.seed);
            let trace = TraceOptions {
                partial_sums: opts.partial_sums,
                threads: split.threads(),
                instr_limit: opts.instr_limit,
                sparsity: None,
                body_cost: DEFAULT_BODY_COST,
            };
            let stats = simulate_run(&layer.params, perm, &config, trace)?;
            Ok(TileResult {
                layer_id: layer.id.clone(),
                perm_lex: lex_index(perm),
                compute_tiles: split.compute_tiles,
                l2_tiles: split.l2_tiles,
                threads: split.threads(),
                l2_kb: split.l2_kb(bank_kb_per_tile),
                cycles: stats.makespan(),
                l2_misses: stats.levels.get(1).map_or(0, |l| l.misses),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub layer_id: String,
    pub best_compute_tiles: usize,
    pub best_cycles: u64,
    pub cycles_at_common: u64,
    /// Relative slowdown of the common split against this layer's best.
    pub loss: f64,
}

/// Per-layer best split against the single split with the best mean
/// normalised performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub common_compute_tiles: usize,
    pub rows: Vec<SplitRow>,
    pub mean_loss: f64,
    pub max_loss: f64,
}

pub fn split_report(results: &[TileResult]) -> Result<SplitReport> {
    let mut layers: Vec<&str> = results.iter().map(|r| r.layer_id.as_str()).collect();
    layers.sort_unstable();
    layers.dedup();
    let mut splits: Vec<usize> = results.iter().map(|r| r.compute_tiles).collect();
    splits.sort_unstable();
    splits.dedup();
    if layers.is_empty() {
        return Err(Error::Coverage("no tile results".into()));
    }
    let cycles = |layer: &str, c: usize| -> Result<u64> {
        results
            .iter()
            .find(|r| r.layer_id == layer && r.compute_tiles == c)
            .map(|r| r.cycles)
            .ok_or_else(|| Error::Coverage(format!("no result for layer `{layer}` with {c} compute tiles")))
    };
    let mut best = Vec::with_capacity(layers.len());
    for &l in &layers {
        let mut top = (splits[0], cycles(l, splits[0])?);
        for &c in &splits[1..] {
            let cy = cycles(l, c)?;
            if cy < top.1 {
                top = (c, cy);
            }
        }
        best.push(top);
    }
    let mut common = (splits[0], f64::NEG_INFINITY);
    for &c in &splits {
        let mut sum = 0.0;
        for (k, &l) in layers.iter().enumerate() {
            sum += best[k].1 as f64 / cycles(l, c)? as f64;
        }
        let mean = sum / layers.len() as f64;
        if mean > common.1 {
            common = (c, mean);
        }
    }
    let mut rows = Vec::with_capacity(layers.len());
    for (k, &l) in layers.iter().enumerate() {
        let at = cycles(l, common.0)?;
        rows.push(SplitRow {
            layer_id: l.to_string(),
            best_compute_tiles: best[k].0,
            best_cycles: best[k].1,
            cycles_at_common: at,
            loss: at as f64 / best[k].1 as f64 - 1.0,
        });
    }
    let mean_loss = rows.iter().map(|r| r.loss).sum::<f64>() / rows.len() as f64;
    let max_loss = rows.iter().map(|r| r.loss).fold(0.0, f64::max);
    Ok(SplitReport {
        common_compute_tiles: common.0,
        rows,
        mean_loss,
        max_loss,
    })
}
