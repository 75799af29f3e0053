//! Loop-order design-space exploration for direct convolution.
//!
//! The six loops of a direct convolution can be nested in 720 orders. This
//! crate enumerates and indexes those orders, generates the exact memory
//! reference stream each order produces, runs it through a configurable
//! cache hierarchy with an additive cycle model, emits equivalent C kernels,
//! sweeps whole design spaces and analyses the persisted results.

pub mod analysis;
pub mod cache;
pub mod codegen;
pub mod conv;
pub mod error;
pub mod explorer;
pub mod permindex;
pub mod rng;
pub mod trace;

pub use cache::{simulate, simulate_opt, windowed_ipc, BufferedTrace, CacheConfig, CacheStats, Replacement};
pub use conv::{oracle_convolve, permuted_convolve, ArrayLayout, Grid, LayerParams, LoopDim, Permutation};
pub use error::{Error, Result};
pub use permindex::{index_of, perm_of, sjt_path, IndexScheme, PermIndex};
pub use trace::{ref_count, MemRef, TraceEvent, TraceGenerator, TraceOptions};
