//! Per-case normalised speedups and rankings of loop orders and of small
//! sets of loop orders.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explorer::SweepResult;
use crate::permindex::{ham_index, perm_from_lex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cycles,
    L2Misses,
}

impl Metric {
    pub fn of(self, r: &SweepResult) -> u64 {
        match self {
            Metric::Cycles => r.cycles,
            Metric::L2Misses => r.l2_misses,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cycles => "cycles",
            Metric::L2Misses => "l2_misses",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cycles" => Ok(Metric::Cycles),
            "l2_misses" | "l2-misses" | "l2" => Ok(Metric::L2Misses),
            _ => Err(Error::Parse(format!(
                "unknown metric `{s}` (expected cycles or l2_misses)"
            ))),
        }
    }
}

/// A (layer, hierarchy, thread count) combination over which loop orders
/// compete.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CaseKey {
    pub layer_id: String,
    pub config_id: String,
    pub threads: usize,
}

impl fmt::Display for CaseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/t{}", self.layer_id, self.config_id, self.threads)
    }
}

impl CaseKey {
    pub fn of(r: &SweepResult) -> Self {
        CaseKey {
            layer_id: r.layer_id.clone(),
            config_id: r.config_id.clone(),
            threads: r.threads,
        }
    }
}

/// `best / value`, with two zero counts treated as equal.
pub fn speedup(best: u64, value: u64) -> f64 {
    if value == 0 {
        1.0
    } else {
        best as f64 / value as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPerm {
    pub perm_lex: usize,
    pub perm_ham: usize,
    pub order: String,
    pub mean: f64,
    pub min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupTable {
    pub metric: Metric,
    pub cases: Vec<CaseKey>,
    /// Lexicographic indices, ascending.
    pub perms: Vec<usize>,
    /// `speedup[p][c]` for `perms[p]` on `cases[c]`.
    pub speedup: Vec<Vec<f64>>,
    /// Raw metric values, same layout.
    pub values: Vec<Vec<u64>>,
    pub ranked: Vec<RankedPerm>,
}

fn by_score(a: (f64, f64), b: (f64, f64)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal))
}

fn mean_min(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut sum, mut min, mut n) = (0.0, f64::INFINITY, 0usize);
    for x in xs {
        sum += x;
        min = min.min(x);
        n += 1;
    }
    (sum / n as f64, min)
}

/// Builds the speedup table. Every case must cover the same set of loop
/// orders (the union over all rows); gaps are reported by key.
pub fn rank_permutations(results: &[SweepResult], metric: Metric) -> Result<SpeedupTable> {
    if results.is_empty() {
        return Err(Error::Coverage("no results to rank".into()));
    }
    let mut by_case: BTreeMap<CaseKey, BTreeMap<usize, u64>> = BTreeMap::new();
    for r in results {
        by_case
            .entry(CaseKey::of(r))
            .or_default()
            .insert(r.perm_lex, metric.of(r));
    }
    let perms: Vec<usize> = results
        .iter()
        .map(|r| r.perm_lex)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut missing = Vec::new();
    for (case, row) in &by_case {
        for p in &perms {
            if !row.contains_key(p) {
                missing.push(format!("({case}, perm {p})"));
            }
        }
    }
    if !missing.is_empty() {
        let shown = missing.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
        let more = if missing.len() > 10 {
            format!(" and {} more", missing.len() - 10)
        } else {
            String::new()
        };
        return Err(Error::Coverage(format!("missing results: {shown}{more}")));
    }

    let cases: Vec<CaseKey> = by_case.keys().cloned().collect();
    let best: Vec<u64> = by_case
        .values()
        .map(|row| *row.values().min().expect("non-empty"))
        .collect();
    let values: Vec<Vec<u64>> = perms
        .iter()
        .map(|p| by_case.values().map(|row| row[p]).collect())
        .collect();
    let speedup: Vec<Vec<f64>> = values
        .iter()
        .map(|vs| vs.iter().zip(&best).map(|(&v, &b)| speedup(b, v)).collect())
        .collect();

    let mut ranked: Vec<RankedPerm> = perms
        .iter()
        .zip(&speedup)
        .map(|(&lex, s)| {
            let (mean, min) = mean_min(s.iter().copied());
            let perm = perm_from_lex(lex).expect("lex index from results");
            RankedPerm {
                perm_lex: lex,
                perm_ham: ham_index(perm),
                order: perm.to_string(),
                mean,
                min,
            }
        })
        .collect();
    ranked.sort_by(|a, b| by_score((a.mean, a.min), (b.mean, b.min)).then(a.perm_lex.cmp(&b.perm_lex)));
    Ok(SpeedupTable {
        metric,
        cases,
        perms,
        speedup,
        values,
        ranked,
    })
}

impl SpeedupTable {
    fn row(&self, lex: usize) -> usize {
        self.perms.binary_search(&lex).expect("perm present in table")
    }

    /// Speedups of one loop order across all cases.
    pub fn speedups_of(&self, lex: usize) -> &[f64] {
        &self.speedup[self.row(lex)]
    }

    /// Best loop order of a case; the lowest lex index among ties.
    pub fn best_of_case(&self, case: usize) -> usize {
        let mut best = 0;
        for p in 1..self.perms.len() {
            if self.values[p][case] < self.values[best][case] {
                best = p;
            }
        }
        self.perms[best]
    }
}

/// A set of loop orders scored by the best member on every case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combo {
    pub members: Vec<usize>,
    pub mean: f64,
    pub min: f64,
}

pub const DEFAULT_BEAM_WIDTH: usize = 256;

fn score(table: &SpeedupTable, rows: &[usize]) -> (f64, f64) {
    mean_min((0..table.cases.len()).map(|c| rows.iter().map(|&r| table.speedup[r][c]).fold(0.0, f64::max)))
}

fn combo(table: &SpeedupTable, rows: Vec<usize>) -> Combo {
    let (mean, min) = score(table, &rows);
    Combo {
        members: rows.into_iter().map(|r| table.perms[r]).collect(),
        mean,
        min,
    }
}

fn sort_combos(combos: &mut [Combo]) {
    combos.sort_by(|a, b| by_score((a.mean, a.min), (b.mean, b.min)).then_with(|| a.members.cmp(&b.members)));
}

/// Ranked `k`-sets of loop orders. `k` of 1 and 2 are enumerated exhaustively;
/// larger `k` grow the best `beam_width` sets one member at a time.
pub fn best_of_k(table: &SpeedupTable, k: usize, beam_width: usize) -> Result<Vec<Combo>> {
    let n = table.perms.len();
    if k == 0 || k > n {
        return Err(Error::Domain(format!("k must be in 1..={n}, got {k}")));
    }
    let mut combos: Vec<Combo> = if k == 1 {
        (0..n).map(|r| combo(table, vec![r])).collect()
    } else {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|a| (a + 1..n).map(move |b| combo(table, vec![a, b])))
            .collect()
    };
    sort_combos(&mut combos);
    if k <= 2 {
        return Ok(combos);
    }
    if beam_width == 0 {
        return Err(Error::Domain("beam width must be at least 1".into()));
    }
    let row_of = |lex: usize| table.row(lex);
    combos.truncate(beam_width);
    for _ in 2..k {
        let mut seen = BTreeSet::new();
        let mut next: Vec<Vec<usize>> = Vec::new();
        for c in &combos {
            let rows: Vec<usize> = c.members.iter().map(|&m| row_of(m)).collect();
            for r in 0..n {
                if rows.contains(&r) {
                    continue;
                }
                let mut grown = rows.clone();
                grown.push(r);
                grown.sort_unstable();
                if seen.insert(grown.clone()) {
                    next.push(grown);
                }
            }
        }
        combos = next.into_par_iter().map(|rows| combo(table, rows)).collect();
        sort_combos(&mut combos);
        combos.truncate(beam_width);
    }
    Ok(combos)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn row(layer: &str, lex: usize, cycles: u64) -> SweepResult {
        let perm = perm_from_lex(lex).unwrap();
        SweepResult {
            layer_id: layer.into(),
            out_ch: 1,
            in_ch: 1,
            img_w: 1,
            img_h: 1,
            ker_w: 1,
            ker_h: 1,
            perm_lex: lex,
            perm_ham: ham_index(perm),
            order: perm.to_string(),
            config_id: "c".into(),
            threads: 1,
            cycles,
            total_cycles: cycles,
            l1_misses: 0,
            l2_misses: cycles / 10,
            memory_accesses: 0,
            refs: 0,
            ticks: 0,
        }
    }

    #[test]
    fn single_case_best_ranks_first_with_unit_scores() {
        let rows = vec![row("a", 0, 300), row("a", 1, 100), row("a", 2, 200)];
        let t = rank_permutations(&rows, Metric::Cycles).unwrap();
        assert_eq!(t.ranked[0].perm_lex, 1);
        assert_eq!((t.ranked[0].mean, t.ranked[0].min), (1.0, 1.0));
        assert_eq!(t.best_of_case(0), 1);
        assert!(t.speedup.iter().flatten().all(|&s| s > 0.0 && s <= 1.0));
    }

    #[test]
    fn ties_break_on_min_then_lex() {
        // every mean is 0.75; perm 2 has the best minimum
        let rows = vec![
            row("a", 0, 300),
            row("a", 1, 600),
            row("a", 2, 400),
            row("b", 0, 600),
            row("b", 1, 300),
            row("b", 2, 400),
        ];
        let t = rank_permutations(&rows, Metric::Cycles).unwrap();
        let order: Vec<usize> = t.ranked.iter().map(|r| r.perm_lex).collect();
        assert_eq!(order, [2, 0, 1]);
    }

    #[test]
    fn missing_rows_are_named() {
        let rows = vec![row("a", 0, 1), row("a", 1, 1), row("b", 0, 1)];
        let err = rank_permutations(&rows, Metric::Cycles).unwrap_err().to_string();
        assert!(err.contains("b/c/t1, perm 1"), "{err}");
    }

    #[test]
    fn singletons_match_the_ranking() {
        let rows: Vec<SweepResult> = (0..6)
            .flat_map(|p| (0..3).map(move |l| row(&format!("l{l}"), p, 100 + ((p * 7 + l * 13) % 11) as u64 * 10)))
            .collect();
        let t = rank_permutations(&rows, Metric::Cycles).unwrap();
        let ones = best_of_k(&t, 1, 1).unwrap();
        let singles: Vec<usize> = ones.iter().map(|c| c.members[0]).collect();
        let ranked: Vec<usize> = t.ranked.iter().map(|r| r.perm_lex).collect();
        assert_eq!(singles, ranked);
        let pairs = best_of_k(&t, 2, 1).unwrap();
        assert_eq!(pairs.len(), 15);
        assert!(pairs[0].mean >= ones[0].mean);
        let triples = best_of_k(&t, 3, 4).unwrap();
        assert!(triples[0].mean >= pairs[0].mean);
        assert!(best_of_k(&t, 7, 4).is_err());
    }
}
