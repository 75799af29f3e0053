//! The direct-convolution workload: loop dimensions, layer extents, the
//! linear memory layout of the three arrays, and a reference implementation
//! used to validate every loop order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per array element.
pub const WORD_BYTES: u64 = 4;

/// One of the six loops of the direct-convolution nest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LoopDim {
    OutChan,
    InChan,
    ImgY,
    ImgX,
    KerY,
    KerX,
}

impl LoopDim {
    /// All dimensions in canonical order.
    pub const ALL: [LoopDim; 6] = [
        LoopDim::OutChan,
        LoopDim::InChan,
        LoopDim::ImgY,
        LoopDim::ImgX,
        LoopDim::KerY,
        LoopDim::KerX,
    ];

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn from_ordinal(ordinal: usize) -> Option<LoopDim> {
        LoopDim::ALL.get(ordinal).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            LoopDim::OutChan => "o",
            LoopDim::InChan => "i",
            LoopDim::ImgY => "y",
            LoopDim::ImgX => "x",
            LoopDim::KerY => "ky",
            LoopDim::KerX => "kx",
        }
    }

    /// Whether the output index depends on this loop variable.
    pub fn indexes_output(self) -> bool {
        matches!(self, LoopDim::OutChan | LoopDim::ImgY | LoopDim::ImgX)
    }

    pub fn is_kernel(self) -> bool {
        matches!(self, LoopDim::KerY | LoopDim::KerX)
    }
}

impl fmt::Display for LoopDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for LoopDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LoopDim::ALL
            .into_iter()
            .find(|d| d.symbol() == s.trim())
            .ok_or_else(|| Error::Parse(format!("unknown loop dimension `{s}`")))
    }
}

/// The six extents of a convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerParams {
    pub out_channels: usize,
    pub in_channels: usize,
    pub img_w: usize,
    pub img_h: usize,
    pub ker_w: usize,
    pub ker_h: usize,
}

impl LayerParams {
    /// Builds a layer from extents in `(out_ch, in_ch, img_w, img_h, ker_w, ker_h)` order.
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        img_w: usize,
        img_h: usize,
        ker_w: usize,
        ker_h: usize,
    ) -> Result<Self> {
        let layer = LayerParams {
            out_channels,
            in_channels,
            img_w,
            img_h,
            ker_w,
            ker_h,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        if self.positional().contains(&0) {
            return Err(Error::Domain(format!(
                "layer extents must all be at least 1, got {self}"
            )));
        }
        Ok(())
    }

    /// Extents in `(out_ch, in_ch, img_w, img_h, ker_w, ker_h)` order.
    pub fn positional(&self) -> [usize; 6] {
        [
            self.out_channels,
            self.in_channels,
            self.img_w,
            self.img_h,
            self.ker_w,
            self.ker_h,
        ]
    }

    pub fn extent(&self, dim: LoopDim) -> usize {
        match dim {
            LoopDim::OutChan => self.out_channels,
            LoopDim::InChan => self.in_channels,
            LoopDim::ImgY => self.img_h,
            LoopDim::ImgX => self.img_w,
            LoopDim::KerY => self.ker_h,
            LoopDim::KerX => self.ker_w,
        }
    }

    pub fn iteration_count(&self) -> u64 {
        self.positional().iter().map(|&e| e as u64).product()
    }

    /// Padded input height.
    pub fn in_h(&self) -> usize {
        self.img_h + self.ker_h - 1
    }

    /// Padded input width.
    pub fn in_w(&self) -> usize {
        self.img_w + self.ker_w - 1
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.in_h() * self.in_w()
    }

    pub fn weights_len(&self) -> usize {
        self.out_channels * self.in_channels * self.ker_h * self.ker_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.img_h * self.img_w
    }
}

impl fmt::Display for LayerParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.positional();
        write!(f, "{},{},{},{},{},{}", p[0], p[1], p[2], p[3], p[4], p[5])
    }
}

impl FromStr for LayerParams {
    type Err = Error;

    /// Parses `out_ch,in_ch,img_w,img_h,ker_w,ker_h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(|c: char| c == ',' || c == 'x' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(|p| {
                p.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad layer extent `{p}` in `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        match parts[..] {
            [o, i, w, h, kw, kh] => LayerParams::new(o, i, w, h, kw, kh),
            _ => Err(Error::Parse(format!(
                "expected six extents out_ch,in_ch,img_w,img_h,ker_w,ker_h, got `{s}`"
            ))),
        }
    }
}

/// Which of the three arrays an address belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Input,
    Weights,
    Out,
}

/// Placement of the input, weight and output arrays in a flat byte address
/// space. Each array is row-major; regions start on `align`-byte boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub layer: LayerParams,
    pub input_base: u64,
    pub weights_base: u64,
    pub out_base: u64,
}

impl ArrayLayout {
    pub const PAGE: u64 = 4096;

    /// Input at address 0, then weights, then output, each page aligned.
    pub fn new(layer: LayerParams) -> Self {
        Self::with_alignment(layer, Self::PAGE)
    }

    pub fn with_alignment(layer: LayerParams, align: u64) -> Self {
        let align = align.max(WORD_BYTES);
        let round = |v: u64| v.div_ceil(align) * align;
        let input_base = 0;
        let weights_base = round(input_base + layer.input_len() as u64 * WORD_BYTES);
        let out_base = round(weights_base + layer.weights_len() as u64 * WORD_BYTES);
        ArrayLayout {
            layer,
            input_base,
            weights_base,
            out_base,
        }
    }

    /// Element offset (in words) contributed by one step of `dim` in each
    /// array: `(input, weights, out)`.
    pub fn strides(&self, dim: LoopDim) -> (u64, u64, u64) {
        let l = &self.layer;
        let in_plane = (l.in_h() * l.in_w()) as u64;
        let in_row = l.in_w() as u64;
        let ker_area = (l.ker_h * l.ker_w) as u64;
        match dim {
            LoopDim::OutChan => (0, l.in_channels as u64 * ker_area, (l.img_h * l.img_w) as u64),
            LoopDim::InChan => (in_plane, ker_area, 0),
            LoopDim::ImgY => (in_row, 0, l.img_w as u64),
            LoopDim::ImgX => (1, 0, 1),
            LoopDim::KerY => (in_row, l.ker_w as u64, 0),
            LoopDim::KerX => (1, 1, 0),
        }
    }

    pub fn input_addr(&self, i: usize, yy: usize, xx: usize) -> u64 {
        let l = &self.layer;
        self.input_base + WORD_BYTES * ((i * l.in_h() + yy) * l.in_w() + xx) as u64
    }

    pub fn weight_addr(&self, o: usize, i: usize, ky: usize, kx: usize) -> u64 {
        let l = &self.layer;
        self.weights_base + WORD_BYTES * (((o * l.in_channels + i) * l.ker_h + ky) * l.ker_w + kx) as u64
    }

    pub fn out_addr(&self, o: usize, y: usize, x: usize) -> u64 {
        let l = &self.layer;
        self.out_base + WORD_BYTES * ((o * l.img_h + y) * l.img_w + x) as u64
    }

    pub fn region_bounds(&self, region: Region) -> (u64, u64) {
        let l = &self.layer;
        let (base, len) = match region {
            Region::Input => (self.input_base, l.input_len()),
            Region::Weights => (self.weights_base, l.weights_len()),
            Region::Out => (self.out_base, l.out_len()),
        };
        (base, base + len as u64 * WORD_BYTES)
    }

    pub fn region_of(&self, addr: u64) -> Option<Region> {
        [Region::Input, Region::Weights, Region::Out].into_iter().find(|&r| {
            let (lo, hi) = self.region_bounds(r);
            (lo..hi).contains(&addr)
        })
    }

    /// One past the last byte of the output array.
    pub fn end(&self) -> u64 {
        self.region_bounds(Region::Out).1
    }
}

/// A loop order, outermost first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Permutation([LoopDim; 6]);

impl Permutation {
    pub const CANONICAL: Permutation = Permutation(LoopDim::ALL);

    pub fn new(order: [LoopDim; 6]) -> Result<Self> {
        let mut seen = [false; 6];
        for d in order {
            if std::mem::replace(&mut seen[d.ordinal()], true) {
                return Err(Error::Domain(format!(
                    "loop dimension `{d}` appears twice in a permutation"
                )));
            }
        }
        Ok(Permutation(order))
    }

    /// Builds a permutation from canonical ordinals, outermost first.
    pub fn from_ordinals(ordinals: &[usize]) -> Result<Self> {
        if ordinals.len() != 6 {
            return Err(Error::Domain(format!(
                "a loop order has 6 entries, got {}",
                ordinals.len()
            )));
        }
        let mut order = [LoopDim::OutChan; 6];
        for (slot, &ord) in order.iter_mut().zip(ordinals) {
            *slot =
                LoopDim::from_ordinal(ord).ok_or_else(|| Error::Domain(format!("loop ordinal {ord} out of range")))?;
        }
        Permutation::new(order)
    }

    pub fn order(&self) -> &[LoopDim; 6] {
        &self.0
    }

    pub fn ordinals(&self) -> [usize; 6] {
        self.0.map(LoopDim::ordinal)
    }

    pub fn outermost(&self) -> LoopDim {
        self.0[0]
    }

    pub fn innermost(&self) -> LoopDim {
        self.0[5]
    }

    /// Order in which the loops close: the reverse of the opening order.
    pub fn closing_order(&self) -> [LoopDim; 6] {
        let mut rev = self.0;
        rev.reverse();
        rev
    }

    /// Nesting depth (0 = outermost) of the deepest loop the output index
    /// depends on. Loops below it only accumulate into a register when partial
    /// sums are enabled.
    pub fn out_depth(&self) -> usize {
        self.0
            .iter()
            .rposition(|d| d.indexes_output())
            .expect("every permutation contains o, y and x")
    }

    /// Whether parallelising the outermost loop lets threads write the output
    /// concurrently, so the update must be atomic.
    pub fn needs_atomic(&self, threads: usize) -> bool {
        threads > 1 && !self.outermost().indexes_output()
    }

    pub fn extents(&self, layer: &LayerParams) -> [usize; 6] {
        self.0.map(|d| layer.extent(d))
    }

    /// Number of output read/write pairs when partial sums are enabled: the
    /// product of the extents from the outermost loop down to `out_depth`.
    pub fn partial_sum_updates(&self, layer: &LayerParams) -> u64 {
        self.extents(layer)[..=self.out_depth()]
            .iter()
            .map(|&e| e as u64)
            .product()
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, d) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("-")?;
            }
            f.write_str(d.symbol())?;
        }
        Ok(())
    }
}

impl FromStr for Permutation {
    type Err = Error;

    /// Parses `o-i-y-x-ky-kx` (commas or spaces also accepted).
    fn from_str(s: &str) -> Result<Self> {
        let dims = s
            .split(|c: char| c == '-' || c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(LoopDim::from_str)
            .collect::<Result<Vec<_>>>()?;
        let order: [LoopDim; 6] = dims
            .try_into()
            .map_err(|_| Error::Parse(format!("a loop order names six loops: `{s}`")))?;
        Permutation::new(order)
    }
}

/// A dense row-major integer tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    shape: Vec<usize>,
    data: Vec<i64>,
}

impl Grid {
    pub fn zeros(shape: &[usize]) -> Self {
        Grid {
            shape: shape.to_vec(),
            data: vec![0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<i64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} holds {len} values, got {}",
                data.len()
            )));
        }
        Ok(Grid {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Fills a grid with pseudo-random integers in `-8..8`.
    pub fn random(shape: &[usize], seed: u64) -> Self {
        use rand::Rng;
        let mut rng = crate::rng::seeded(seed);
        let len = shape.iter().product();
        Grid {
            shape: shape.to_vec(),
            data: (0..len).map(|_| rng.random_range(-8..8)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[i64] {
        &self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, index: &[usize]) -> i64 {
        self.data[self.offset(index)]
    }

    pub fn get_mut(&mut self, index: &[usize]) -> &mut i64 {
        let off = self.offset(index);
        &mut self.data[off]
    }
}

pub fn input_shape(layer: &LayerParams) -> [usize; 3] {
    [layer.in_channels, layer.in_h(), layer.in_w()]
}

pub fn weights_shape(layer: &LayerParams) -> [usize; 4] {
    [layer.out_channels, layer.in_channels, layer.ker_h, layer.ker_w]
}

pub fn out_shape(layer: &LayerParams) -> [usize; 3] {
    [layer.out_channels, layer.img_h, layer.img_w]
}

fn check_shapes(layer: &LayerParams, input: &Grid, weights: &Grid) -> Result<()> {
    layer.validate()?;
    if input.shape() != input_shape(layer) {
        return Err(Error::Shape(format!(
            "input grid is {:?}, layer {layer} needs {:?}",
            input.shape(),
            input_shape(layer)
        )));
    }
    if weights.shape() != weights_shape(layer) {
        return Err(Error::Shape(format!(
            "weight grid is {:?}, layer {layer} needs {:?}",
            weights.shape(),
            weights_shape(layer)
        )));
    }
    Ok(())
}

/// Reference convolution in the canonical `o, i, y, x, ky, kx` order.
pub fn oracle_convolve(layer: &LayerParams, input: &Grid, weights: &Grid) -> Result<Grid> {
    check_shapes(layer, input, weights)?;
    let mut out = Grid::zeros(&out_shape(layer));
    for o in 0..layer.out_channels {
        for i in 0..layer.in_channels {
            for y in 0..layer.img_h {
                for x in 0..layer.img_w {
                    for ky in 0..layer.ker_h {
                        for kx in 0..layer.ker_w {
                            *out.get_mut(&[o, y, x]) += input.get(&[i, y + ky, x + kx]) * weights.get(&[o, i, ky, kx]);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Tallies taken while running [`permuted_convolve_instrumented`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConvCounters {
    /// Innermost body executions.
    pub body: u64,
    /// Stores to the output array.
    pub out_writes: u64,
}

/// Convolution executed in the loop order `perm`, accumulating into a
/// register and storing to the output only when the loops that do not index
/// the output have closed.
pub fn permuted_convolve(layer: &LayerParams, input: &Grid, weights: &Grid, perm: Permutation) -> Result<Grid> {
    permuted_convolve_instrumented(layer, input, weights, perm).map(|(g, _)| g)
}

pub fn permuted_convolve_instrumented(
    layer: &LayerParams,
    input: &Grid,
    weights: &Grid,
    perm: Permutation,
) -> Result<(Grid, ConvCounters)> {
    check_shapes(layer, input, weights)?;
    let mut out = Grid::zeros(&out_shape(layer));
    let mut counters = ConvCounters::default();
    let extents = perm.extents(layer);
    let flush_depth = perm.out_depth();

    // idx[d] is the current value of loop dimension d (canonical ordinal).
    let mut idx = [0usize; 6];
    let mut acc = 0i64;
    loop {
        let [o, i, y, x, ky, kx] = idx;
        acc += input.get(&[i, y + ky, x + kx]) * weights.get(&[o, i, ky, kx]);
        counters.body += 1;

        // Advance the odometer from the innermost position outwards.
        let mut pos = 6;
        let mut carried = true;
        while carried && pos > 0 {
            pos -= 1;
            if pos == flush_depth {
                // Every loop nested inside the deepest output-indexing loop
                // has wrapped: store the partial sum.
                *out.get_mut(&[o, y, x]) += acc;
                acc = 0;
                counters.out_writes += 1;
            }
            let d = perm.order()[pos].ordinal();
            idx[d] += 1;
            carried = idx[d] == extents[pos];
            if carried {
                idx[d] = 0;
            }
        }
        if carried {
            break;
        }
    }
    Ok((out, counters))
}
