use loopnest::conv::{permuted_convolve_instrumented, LoopDim, Region};
use loopnest::permindex::{index_of, perm_from_lex, perm_of, IndexScheme};
use loopnest::trace::{ref_count, AccessKind, RefCount, TraceEvent, TraceGenerator, TraceOptions};
use loopnest::{ArrayLayout, Grid, LayerParams};
use proptest::prelude::*;

fn small_layer() -> impl Strategy<Value = LayerParams> {
    (1usize..4, 1usize..4, 1usize..5, 1usize..5, 1usize..4, 1usize..4)
        .prop_map(|(o, i, w, h, kw, kh)| LayerParams::new(o, i, w, h, kw, kh).unwrap())
}

fn opts(threads: usize, limit: Option<u64>) -> TraceOptions {
    TraceOptions {
        threads,
        instr_limit: limit,
        ..TraceOptions::default()
    }
}

fn events(layer: LayerParams, lex: usize, o: TraceOptions) -> Vec<TraceEvent> {
    TraceGenerator::new(ArrayLayout::new(layer), perm_from_lex(lex).unwrap(), o)
        .unwrap()
        .collect()
}

/// Writes to the output: one per iteration of the loops down to the
/// deepest output-indexing loop, counted by walking the order directly.
fn output_write_oracle(layer: &LayerParams, lex: usize) -> u64 {
    let perm = perm_from_lex(lex).unwrap();
    let mut writes = 1u64;
    let mut pending = 1u64;
    for &d in perm.order() {
        pending *= layer.extent(d) as u64;
        if matches!(d, LoopDim::OutChan | LoopDim::ImgY | LoopDim::ImgX) {
            writes *= pending;
            pending = 1;
        }
    }
    writes
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn indices_round_trip(lex in 0usize..720) {
        let p = perm_from_lex(lex).unwrap();
        for scheme in [IndexScheme::Lex, IndexScheme::RevLex, IndexScheme::Hamiltonian] {
            let idx = index_of(p, scheme);
            prop_assert!(idx.value < 720);
            prop_assert_eq!(perm_of(idx).unwrap(), p);
        }
    }

    #[test]
    fn closed_form_counts_match_the_stream(layer in small_layer(), lex in 0usize..720, threads in 1usize..5, partial in any::<bool>()) {
        let o = TraceOptions { partial_sums: partial, ..opts(threads, None) };
        let stream = RefCount::tally(events(layer, lex, o));
        prop_assert_eq!(ref_count(&layer, perm_from_lex(lex).unwrap(), &o).unwrap(), stream);
    }

    #[test]
    fn output_writes_follow_the_dependency_product(layer in small_layer(), lex in 0usize..720) {
        let writes = RefCount::tally(events(layer, lex, opts(1, None))).writes;
        let want = output_write_oracle(&layer, lex);
        prop_assert_eq!(writes, want);
        prop_assert!(writes <= layer.iteration_count());

        let input = Grid::random(&loopnest::conv::input_shape(&layer), 1);
        let weights = Grid::random(&loopnest::conv::weights_shape(&layer), 2);
        let (_, counters) = permuted_convolve_instrumented(&layer, &input, &weights, perm_from_lex(lex).unwrap()).unwrap();
        prop_assert_eq!(counters.out_writes, want);
    }

    #[test]
    fn limit_is_exact(layer in small_layer(), lex in 0usize..720, threads in 1usize..4, limit in 1u64..2000) {
        let full = RefCount::tally(events(layer, lex, opts(threads, None))).instructions();
        let got: u64 = events(layer, lex, opts(threads, Some(limit))).iter().map(TraceEvent::weight).sum();
        prop_assert_eq!(got, limit.min(full));
    }

    #[test]
    fn addresses_stay_in_their_regions(layer in small_layer(), lex in 0usize..720, threads in 1usize..4) {
        let layout = ArrayLayout::new(layer);
        for ev in events(layer, lex, opts(threads, None)) {
            if let TraceEvent::Mem(m) = ev {
                prop_assert!((m.thread as usize) < threads);
                prop_assert_eq!(m.address % 4, 0);
                let region = layout.region_of(m.address);
                prop_assert!(region.is_some());
                if m.kind == AccessKind::Write {
                    prop_assert_eq!(region, Some(Region::Out));
                }
            }
        }
    }

    #[test]
    fn thread_count_does_not_change_memory_traffic(layer in small_layer(), lex in 0usize..720, threads in 2usize..6) {
        let one = RefCount::tally(events(layer, lex, opts(1, None)));
        let many = RefCount::tally(events(layer, lex, opts(threads, None)));
        prop_assert_eq!(one.refs(), many.refs());
    }
}
