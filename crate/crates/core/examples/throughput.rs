//! Simulator throughput on a mid-sized layer: `cargo run --release --example throughput [dims]`.

use std::time::Instant;

use loopnest::permindex::perm_from_lex;
use loopnest::{simulate, ArrayLayout, CacheConfig, LayerParams, TraceGenerator, TraceOptions};

fn main() {
    let dims = std::env::args().nth(1).unwrap_or_else(|| "64,16,14,14,3,3".into());
    let layer: LayerParams = dims.parse().expect("layer extents");
    let cfg = CacheConfig::loki(1);
    for lex in [0usize, 300, 719] {
        let perm = perm_from_lex(lex).unwrap();
        let t = Instant::now();
        let gen = TraceGenerator::new(ArrayLayout::new(layer), perm, TraceOptions::default()).unwrap();
        let stats = simulate(gen, &cfg).unwrap();
        let dt = t.elapsed().as_secs_f64();
        println!(
            "{perm}: {} refs, {} cycles, {dt:.2}s, {:.1}M refs/s",
            stats.refs(),
            stats.cycles,
            stats.refs() as f64 / dt / 1e6
        );
    }
}
