//! Built-in layer sets.

use crate::conv::LayerParams;
use crate::error::{Error, Result};

use super::NamedLayer;

pub const PRESET_NAMES: [&str; 3] = ["squeezenet", "synthetic-216", "synthetic-36"];

const SQUEEZENET: [(&str, [usize; 6]); 8] = [
    ("initial-conf", [256, 32, 28, 28, 3, 3]),
    ("fire3-conv3x3-2", [64, 16, 55, 55, 3, 3]),
    ("fire4-conv1x1-1", [32, 128, 55, 55, 1, 1]),
    ("fire4-conv1x1-2", [128, 32, 55, 55, 1, 1]),
    ("fire7-conv1x1-1", [48, 384, 27, 27, 1, 1]),
    ("fire9-conv1x1-1", [64, 512, 13, 13, 1, 1]),
    ("fire9-conv3x3-2", [256, 64, 13, 13, 3, 3]),
    ("conv-final", [1000, 512, 13, 13, 1, 1]),
];

fn layer(dims: [usize; 6]) -> LayerParams {
    LayerParams::new(dims[0], dims[1], dims[2], dims[3], dims[4], dims[5]).expect("preset extents are positive")
}

pub fn squeezenet() -> Vec<NamedLayer> {
    SQUEEZENET
        .iter()
        .map(|(id, dims)| NamedLayer::new(id, layer(*dims)))
        .collect()
}

/// Square layers with equal input and output channel counts, one per
/// combination of the three value lists.
pub fn grid(channels: &[usize], images: &[usize], kernels: &[usize]) -> Vec<NamedLayer> {
    let mut out = Vec::with_capacity(channels.len() * images.len() * kernels.len());
    for &c in channels {
        for &img in images {
            for &k in kernels {
                let id = format!("c{c:03}-i{img:03}-k{k:02}");
                out.push(NamedLayer::new(&id, layer([c, c, img, img, k, k])));
            }
        }
    }
    out
}

pub const SYNTH_216_SIDES: [usize; 6] = [10, 50, 90, 130, 170, 210];
pub const SYNTH_216_KERNELS: [usize; 6] = [1, 3, 5, 7, 9, 11];
pub const SYNTH_36_SIDES: [usize; 3] = [10, 90, 170];
pub const SYNTH_36_KERNELS: [usize; 4] = [1, 3, 9, 11];

pub fn synthetic_216() -> Vec<NamedLayer> {
    grid(&SYNTH_216_SIDES, &SYNTH_216_SIDES, &SYNTH_216_KERNELS)
}

pub fn synthetic_36() -> Vec<NamedLayer> {
    grid(&SYNTH_36_SIDES, &SYNTH_36_SIDES, &SYNTH_36_KERNELS)
}

pub fn preset(name: &str) -> Result<Vec<NamedLayer>> {
    match name {
        "squeezenet" => Ok(squeezenet()),
        "synthetic-216" => Ok(synthetic_216()),
        "synthetic-36" => Ok(synthetic_36()),
        _ => Err(Error::Config(format!(
            "unknown layer preset `{name}` (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}
