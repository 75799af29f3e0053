//! How loop-order rankings move between hierarchies or thread counts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::SweepResult;
use crate::permindex::PERM_COUNT;

use super::ranking::{rank_permutations, Metric, SpeedupTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    CacheConfig,
    Threads,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::CacheConfig => "cache_config",
            Axis::Threads => "threads",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cache_config" | "cache-config" | "config" | "cache" => Ok(Axis::CacheConfig),
            "threads" => Ok(Axis::Threads),
            _ => Err(Error::Parse(format!(
                "unknown axis `{s}` (expected cache_config or threads)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub perm_lex: usize,
    pub perm_ham: usize,
    /// Hamiltonian index scaled to [0, 1], for colouring.
    pub color: f64,
    /// Mean speedup per group, in group order.
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub from: String,
    pub to: String,
    pub spearman: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityExport {
    pub axis: Axis,
    pub groups: Vec<String>,
    pub rows: Vec<StabilityRow>,
    pub correlations: Vec<Correlation>,
}

fn group_key(axis: Axis, r: &SweepResult) -> (usize, String) {
    match axis {
        // thread counts sort numerically, not as text
        Axis::Threads => (r.threads, format!("threads={}", r.threads)),
        Axis::CacheConfig => (0, r.config_id.clone()),
    }
}

/// Mean speedup of every loop order within each group of the axis.
pub fn stability_export(results: &[SweepResult], axis: Axis, metric: Metric) -> Result<StabilityExport> {
    let mut groups: BTreeMap<(usize, String), Vec<SweepResult>> = BTreeMap::new();
    for r in results {
        groups.entry(group_key(axis, r)).or_default().push(r.clone());
    }
    if groups.is_empty() {
        return Err(Error::Coverage("no results".into()));
    }
    let mut tables = Vec::with_capacity(groups.len());
    for ((_, name), rows) in &groups {
        tables.push((name.clone(), rank_permutations(rows, metric)?));
    }
    let perms = tables[0].1.perms.clone();
    for (name, t) in &tables[1..] {
        if t.perms != perms {
            return Err(Error::Coverage(format!(
                "group `{name}` covers {} loop orders, group `{}` covers {}",
                t.perms.len(),
                tables[0].0,
                perms.len()
            )));
        }
    }
    let mean_of: Vec<BTreeMap<usize, f64>> = tables
        .iter()
        .map(|(_, t)| t.ranked.iter().map(|r| (r.perm_lex, r.mean)).collect())
        .collect();
    let ham_of: BTreeMap<usize, usize> = tables[0].1.ranked.iter().map(|r| (r.perm_lex, r.perm_ham)).collect();
    let rows: Vec<StabilityRow> = perms
        .iter()
        .map(|&p| StabilityRow {
            perm_lex: p,
            perm_ham: ham_of[&p],
            color: ham_of[&p] as f64 / (PERM_COUNT - 1) as f64,
            means: mean_of.iter().map(|m| m[&p]).collect(),
        })
        .collect();
    let names: Vec<String> = tables.iter().map(|(n, _)| n.clone()).collect();
    let correlations = (1..names.len())
        .map(|g| {
            let a: Vec<f64> = rows.iter().map(|r| r.means[g - 1]).collect();
            let b: Vec<f64> = rows.iter().map(|r| r.means[g]).collect();
            Correlation {
                from: names[g - 1].clone(),
                to: names[g].clone(),
                spearman: spearman(&a, &b),
            }
        })
        .collect();
    Ok(StabilityExport {
        axis,
        groups: names,
        rows,
        correlations,
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if saa == sbb { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Splits loop orders into a good and a degraded group at the widest gap
/// between consecutive mean speedups. Returns the degraded lex indices,
/// ascending.
pub fn degraded_group(means: &[(usize, f64)]) -> Vec<usize> {
    if means.len() < 2 {
        return Vec::new();
    }
    let mut sorted = means.to_vec();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut cut = 1;
    let mut widest = f64::NEG_INFINITY;
    for k in 1..sorted.len() {
        let gap = sorted[k - 1].1 - sorted[k].1;
        if gap > widest {
            widest = gap;
            cut = k;
        }
    }
    let mut out: Vec<usize> = sorted[cut..].iter().map(|&(p, _)| p).collect();
    out.sort_unstable();
    out
}

/// Degraded loop orders of a table, ranked by worst-case speedup: an order
/// that collapses on a single case lands below the gap even when it does
/// well on average.
pub fn degraded_by_worst_case(table: &SpeedupTable) -> Vec<usize> {
    let mins: Vec<(usize, f64)> = table.ranked.iter().map(|r| (r.perm_lex, r.min)).collect();
    degraded_group(&mins)
}
