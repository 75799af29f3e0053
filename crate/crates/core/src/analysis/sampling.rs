//! How many loop orders must be drawn at random to hit a good one.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::ranking::SpeedupTable;

/// Smallest `m` with `1 - (1 - g)^m >= confidence`, or `None` when `g` is 0.
pub fn sample_size_for(g: f64, confidence: f64) -> Result<Option<u64>> {
    if !(0.0..=1.0).contains(&g) {
        return Err(Error::Domain(format!("good fraction {g} outside [0, 1]")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Domain(format!("confidence {confidence} outside (0, 1)")));
    }
    if g == 0.0 {
        return Ok(None);
    }
    if g == 1.0 {
        return Ok(Some(1));
    }
    let hit = |m: u64| 1.0 - (1.0 - g).powf(m as f64);
    let mut m = ((1.0 - confidence).ln() / (1.0 - g).ln()).ceil().max(1.0) as u64;
    // Correct for rounding in the logarithms.
    while hit(m) < confidence {
        m += 1;
    }
    while m > 1 && hit(m - 1) >= confidence {
        m -= 1;
    }
    Ok(Some(m))
}

/// Probability that `m` draws with success chance `g` contain a success.
pub fn hit_probability(g: f64, m: u64) -> f64 {
    1.0 - (1.0 - g).powf(m as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub trials: u64,
    pub estimate: f64,
    pub std_error: f64,
}

/// Estimates [`hit_probability`] by simulating `trials` rounds of `m` draws
/// with replacement.
pub fn monte_carlo_hit(g: f64, m: u64, trials: u64, seed: u64) -> MonteCarlo {
    let mut rng = rng::seeded(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        if (0..m).any(|_| rng.random::<f64>() < g) {
            hits += 1;
        }
    }
    let p = hits as f64 / trials as f64;
    MonteCarlo {
        trials,
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub threshold: f64,
    pub confidence: f64,
    /// Fewest good loop orders over all cases.
    pub worst_case_good: usize,
    pub perm_count: usize,
    pub good_fraction: f64,
    pub sample_size: Option<u64>,
    pub achieved: Option<f64>,
}

/// Sample size needed so that, with the given confidence, at least one
/// drawn loop order reaches `threshold` speedup even on the hardest case.
pub fn random_sampling_requirement(table: &SpeedupTable, threshold: f64, confidence: f64) -> Result<SamplingReport> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Domain(format!("threshold {threshold} outside (0, 1]")));
    }
    let worst = (0..table.cases.len())
        .map(|c| table.speedup.iter().filter(|row| row[c] >= threshold).count())
        .min()
        .unwrap_or(0);
    let g = worst as f64 / table.perms.len() as f64;
    let m = sample_size_for(g, confidence)?;
    Ok(SamplingReport {
        threshold,
        confidence,
        worst_case_good: worst,
        perm_count: table.perms.len(),
        good_fraction: g,
        sample_size: m,
        achieved: m.map(|m| hit_probability(g, m)),
    })
}
