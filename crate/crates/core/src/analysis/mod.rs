//! Offline analyses over persisted sweep results.

pub mod export;
pub mod ranking;
pub mod reuse;
pub mod sampling;
pub mod stability;

pub use ranking::{best_of_k, rank_permutations, CaseKey, Combo, Metric, RankedPerm, SpeedupTable, DEFAULT_BEAM_WIDTH};
pub use reuse::{reuse_map, ReuseMap, ReuseMapper, ReusePoint, WorkingSet, DEFAULT_WINDOW};
pub use sampling::{
    hit_probability, monte_carlo_hit, random_sampling_requirement, sample_size_for, MonteCarlo, SamplingReport,
};
pub use stability::{
    degraded_by_worst_case, degraded_group, spearman, stability_export, Axis, StabilityExport, StabilityRow,
};
