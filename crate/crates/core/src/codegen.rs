//! C source generator for a convolution in a given loop order.
//!
//! The emitted file is plain C99 (plus OpenMP pragmas when more than one
//! thread is requested). Extent products are folded into constants, array
//! offsets are carried as running sums in each loop header, and loops close
//! in the reverse of their opening order.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::conv::{oracle_convolve, Grid, LayerParams, LoopDim, Permutation};
use crate::error::{Error, Result};
use crate::permindex::{ham_index, lex_index};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodegenOptions {
    pub threads: usize,
    pub partial_sums: bool,
    /// Fill the inputs with LCG data and print a checksum of the output.
    pub emit_validation: bool,
    pub seed: u32,
}

impl Default for CodegenOptions {
    fn default() -> Self {
        CodegenOptions {
            threads: 1,
            partial_sums: true,
            emit_validation: false,
            seed: 1,
        }
    }
}

/// `#define` names and values of the folded extent products.
pub fn constants(layer: &LayerParams) -> Vec<(&'static str, u64)> {
    let l = layer;
    let in_w = l.in_w() as u64;
    let in_h = l.in_h() as u64;
    let ker_area = (l.ker_w * l.ker_h) as u64;
    vec![
        ("OUT_CH", l.out_channels as u64),
        ("IN_CH", l.in_channels as u64),
        ("IMG_W", l.img_w as u64),
        ("IMG_H", l.img_h as u64),
        ("KER_W", l.ker_w as u64),
        ("KER_H", l.ker_h as u64),
        ("IN_W", in_w),
        ("IN_H", in_h),
        ("IN_PLANE", in_h * in_w),
        ("KER_AREA", ker_area),
        ("W_PER_OUT", l.in_channels as u64 * ker_area),
        ("OUT_PLANE", (l.img_w * l.img_h) as u64),
        ("INPUT_LEN", l.input_len() as u64),
        ("WEIGHTS_LEN", l.weights_len() as u64),
        ("OUT_LEN", l.out_len() as u64),
    ]
}

fn extent_name(dim: LoopDim) -> &'static str {
    match dim {
        LoopDim::OutChan => "OUT_CH",
        LoopDim::InChan => "IN_CH",
        LoopDim::ImgY => "IMG_H",
        LoopDim::ImgX => "IMG_W",
        LoopDim::KerY => "KER_H",
        LoopDim::KerX => "KER_W",
    }
}

/// Per-array step of `dim` as a constant name: `(input, weights, out)`.
pub fn stride_names(dim: LoopDim) -> [Option<&'static str>; 3] {
    match dim {
        LoopDim::OutChan => [None, Some("W_PER_OUT"), Some("OUT_PLANE")],
        LoopDim::InChan => [Some("IN_PLANE"), Some("KER_AREA"), None],
        LoopDim::ImgY => [Some("IN_W"), None, Some("IMG_W")],
        LoopDim::ImgX => [Some("1"), None, Some("1")],
        LoopDim::KerY => [Some("IN_W"), Some("KER_W"), None],
        LoopDim::KerX => [Some("1"), Some("1"), None],
    }
}

const ARRAYS: [&str; 3] = ["in", "w", "out"];

/// Name of the generated file for a layer label and loop order.
pub fn file_name(layer_label: &str, perm: Permutation) -> String {
    format!("{layer_label}_{}.c", lex_index(perm))
}

struct Emitter {
    src: String,
    depth: usize,
}

impl Emitter {
    fn line(&mut self, text: &str) {
        for _ in 0..self.depth {
            self.src.push_str("    ");
        }
        self.src.push_str(text);
        self.src.push('\n');
    }
}

/// Emits a complete C program computing the convolution of `layer` in loop
/// order `perm`.
pub fn emit_c(layer: &LayerParams, perm: Permutation, opts: &CodegenOptions) -> Result<String> {
    layer.validate()?;
    if opts.threads == 0 {
        return Err(Error::Config("codegen needs at least one thread".into()));
    }
    let parallel = opts.threads > 1;
    let atomic = perm.needs_atomic(opts.threads);
    let flush_depth = if opts.partial_sums { perm.out_depth() } else { 5 };

    let mut e = Emitter {
        src: String::new(),
        depth: 0,
    };
    e.src.push_str(&format!(
        "/*\n * Direct convolution, loop order {perm} (lexicographic index {}, hamiltonian index {}).\n",
        lex_index(perm),
        ham_index(perm)
    ));
    e.src.push_str(&format!(
        " * Layer (out_ch, in_ch, img_w, img_h, ker_w, ker_h): {layer}.\n"
    ));
    e.src
        .push_str(" * Generated by loopnest. Compile without optimisation (-O0) so the\n");
    e.src
        .push_str(" * access pattern survives; add -fopenmp when THREADS > 1.\n */\n");
    e.src
        .push_str("#include <stdint.h>\n#include <stdio.h>\n#include <stdlib.h>\n\n");
    e.src.push_str(&format!("#define THREADS {}\n", opts.threads));
    for (name, value) in constants(layer) {
        let _ = writeln!(e.src, "#define {name} {value}");
    }
    e.src.push('\n');
    e.src.push_str("int main(void)\n{\n");
    e.depth = 1;
    // malloc, not calloc: pages are touched only by the loop nest itself.
    e.line("int32_t *input = malloc(sizeof(int32_t) * INPUT_LEN);");
    e.line("int32_t *weights = malloc(sizeof(int32_t) * WEIGHTS_LEN);");
    e.line("int32_t *out = malloc(sizeof(int32_t) * OUT_LEN);");
    e.line("if (!input || !weights || !out)");
    e.line("    return 1;");
    if opts.emit_validation {
        e.line(&format!("uint32_t state = {}u;", opts.seed));
        for (array, len) in [("input", "INPUT_LEN"), ("weights", "WEIGHTS_LEN")] {
            e.line(&format!("for (long k = 0; k < {len}; k++) {{"));
            e.line("    state = state * 1664525u + 1013904223u;");
            e.line(&format!("    {array}[k] = (int32_t)(state >> 28) - 8;"));
            e.line("}");
        }
        e.line("for (long k = 0; k < OUT_LEN; k++)");
        e.line("    out[k] = 0;");
    }
    e.src.push('\n');

    // Current offset expression of each array.
    let mut cur: [String; 3] = ["0".into(), "0".into(), "0".into()];
    let mut closing: Vec<String> = Vec::with_capacity(6);
    for (pos, &dim) in perm.order().iter().enumerate() {
        let var = dim.symbol();
        let strides = stride_names(dim);
        let mut decls = Vec::new();
        let mut steps = Vec::new();
        let mut next = cur.clone();
        for (k, stride) in strides.iter().enumerate() {
            if let Some(stride) = stride {
                let name = format!("{}_{var}", ARRAYS[k]);
                if pos == 0 && parallel {
                    decls.push(format!("{name} = {var} * {stride}"));
                } else {
                    decls.push(format!("{name} = {}", cur[k]));
                    steps.push(format!("{name} += {stride}"));
                }
                next[k] = name;
            }
        }
        if pos == 0 && parallel {
            e.line("#pragma omp parallel for schedule(static) num_threads(THREADS)");
            e.line(&format!(
                "for (long {var} = 0; {var} < {}; {var}++) {{",
                extent_name(dim)
            ));
            e.depth += 1;
            e.line(&format!("const long {};", decls.join(", ")));
        } else {
            let mut init = vec![format!("{var} = 0")];
            init.extend(decls);
            let mut incr = vec![format!("{var}++")];
            incr.extend(steps);
            e.line(&format!(
                "for (long {}; {var} < {}; {}) {{",
                init.join(", "),
                extent_name(dim),
                incr.join(", ")
            ));
            e.depth += 1;
        }
        cur = next;
        closing.push(var.to_string());
        if pos == flush_depth && flush_depth < 5 {
            e.line("int32_t sum = 0;");
        }
    }

    let product = format!("input[{}] * weights[{}]", cur[0], cur[1]);
    if flush_depth < 5 {
        e.line(&format!("sum += {product};"));
    } else {
        if atomic {
            e.line("#pragma omp atomic");
        }
        e.line(&format!("out[{}] += {product};", cur[2]));
    }

    for pos in (0..6).rev() {
        e.depth -= 1;
        e.line(&format!("}} /* {} */", closing[pos]));
        if pos == flush_depth + 1 {
            if atomic {
                e.line("#pragma omp atomic");
            }
            e.line(&format!("out[{}] += sum;", cur[2]));
        }
    }
    e.src.push('\n');

    if opts.emit_validation {
        e.line("int64_t checksum = 0;");
        e.line("for (long k = 0; k < OUT_LEN; k++)");
        e.line("    checksum += (int64_t)out[k] * (k % 1009 + 1);");
        e.line("printf(\"checksum %lld\\n\", (long long)checksum);");
    }
    e.line("free(input);");
    e.line("free(weights);");
    e.line("free(out);");
    e.line("return 0;");
    e.src.push_str("}\n");
    Ok(e.src)
}

/// The values the validation build fills its inputs with.
pub fn validation_inputs(layer: &LayerParams, seed: u32) -> (Grid, Grid) {
    let mut state = seed;
    let mut draw = |n: usize| -> Vec<i64> {
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                (state >> 28) as i64 - 8
            })
            .collect()
    };
    let input = draw(layer.input_len());
    let weights = draw(layer.weights_len());
    (
        Grid::from_vec(&crate::conv::input_shape(layer), input).expect("sized from layer"),
        Grid::from_vec(&crate::conv::weights_shape(layer), weights).expect("sized from layer"),
    )
}

/// Checksum a correct validation build prints, computed with the reference
/// convolution.
pub fn expected_checksum(layer: &LayerParams, seed: u32) -> Result<i64> {
    let (input, weights) = validation_inputs(layer, seed);
    let out = oracle_convolve(layer, &input, &weights)?;
    Ok(out
        .data()
        .iter()
        .enumerate()
        .map(|(k, &v)| v * (k as i64 % 1009 + 1))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::ArrayLayout;

    fn layer() -> LayerParams {
        "8,4,6,5,3,2".parse().unwrap()
    }

    fn for_vars(src: &str) -> Vec<String> {
        src.lines()
            .filter_map(|l| l.trim().strip_prefix("for (long "))
            .map(|rest| rest.split([' ', '=']).next().unwrap().to_string())
            .filter(|v| v != "k")
            .collect()
    }

    #[test]
    fn canonical_loop_headers_in_order() {
        let src = emit_c(&layer(), Permutation::CANONICAL, &CodegenOptions::default()).unwrap();
        assert_eq!(for_vars(&src), ["o", "i", "y", "x", "ky", "kx"]);
        assert!(src.contains("malloc("));
        assert!(!src.contains("calloc"));
        assert!(!src.contains("#pragma omp"));
    }

    #[test]
    fn atomic_when_input_channels_are_split() {
        let perm: Permutation = "i-o-y-x-ky-kx".parse().unwrap();
        let opts = CodegenOptions {
            threads: 8,
            ..CodegenOptions::default()
        };
        let src = emit_c(&layer(), perm, &opts).unwrap();
        assert!(src.contains("#pragma omp atomic"));
        assert!(src.contains("schedule(static)"));
        let perm: Permutation = "x-i-o-y-ky-kx".parse().unwrap();
        assert!(!emit_c(&layer(), perm, &opts).unwrap().contains("#pragma omp atomic"));
    }

    #[test]
    fn constants_match_layout_strides() {
        let l = layer();
        let consts: std::collections::HashMap<_, _> = constants(&l).into_iter().collect();
        let lay = ArrayLayout::new(l);
        for dim in LoopDim::ALL {
            let (si, sw, so) = lay.strides(dim);
            for (name, expect) in stride_names(dim).iter().zip([si, sw, so]) {
                let got = match name {
                    None => 0,
                    Some("1") => 1,
                    Some(n) => consts[n],
                };
                assert_eq!(got, expect, "{dim} stride");
            }
        }
        assert_eq!(consts["INPUT_LEN"], l.input_len() as u64);
    }

    #[test]
    fn partial_sum_flush_sits_after_inner_block() {
        let src = emit_c(&layer(), Permutation::CANONICAL, &CodegenOptions::default()).unwrap();
        let ky_close = src.find("} /* ky */").unwrap();
        let flush = src.find("out[out_x] += sum;").unwrap();
        let x_close = src.find("} /* x */").unwrap();
        assert!(ky_close < flush && flush < x_close);
        let dense = CodegenOptions {
            partial_sums: false,
            ..CodegenOptions::default()
        };
        assert!(emit_c(&layer(), Permutation::CANONICAL, &dense)
            .unwrap()
            .contains("out[out_x] += input[in_kx] * weights[w_kx];"));
    }

    #[test]
    fn deterministic_text() {
        let opts = CodegenOptions {
            threads: 4,
            emit_validation: true,
            ..CodegenOptions::default()
        };
        let p: Permutation = "ky-x-o-i-kx-y".parse().unwrap();
        assert_eq!(emit_c(&layer(), p, &opts).unwrap(), emit_c(&layer(), p, &opts).unwrap());
        assert_eq!(file_name("fire3", p), format!("fire3_{}.c", lex_index(p)));
    }
}
