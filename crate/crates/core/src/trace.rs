//! Memory-reference streams of the generated convolution code.
//!
//! [`TraceGenerator`] walks the loop nest in a given order and yields the
//! loads and stores the emitted C program performs, interleaved with batches
//! of non-memory instruction ticks. Nothing is compiled or executed; the
//! stream is exact by construction and produced lazily.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conv::{ArrayLayout, LayerParams, Permutation, WORD_BYTES};
use crate::error::{Error, Result};
use crate::rng;

/// Non-memory instructions per innermost iteration: multiply, accumulate,
/// index increment, branch.
pub const DEFAULT_BODY_COST: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRef {
    pub address: u64,
    pub kind: AccessKind,
    pub thread: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    Mem(MemRef),
    /// `count` non-memory instructions retired by `thread`.
    Ticks {
        thread: u16,
        count: u32,
    },
}

impl TraceEvent {
    /// Instructions this event stands for.
    pub fn weight(&self) -> u64 {
        match self {
            TraceEvent::Mem(_) => 1,
            TraceEvent::Ticks { count, .. } => *count as u64,
        }
    }

    pub fn thread(&self) -> u16 {
        match self {
            TraceEvent::Mem(m) => m.thread,
            TraceEvent::Ticks { thread, .. } => *thread,
        }
    }
}

/// Bernoulli zero masks over weights and activations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sparsity {
    pub weight_density: f64,
    pub activation_density: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    pub partial_sums: bool,
    pub threads: usize,
    /// Stop once this many instructions (ticks plus references) were emitted.
    pub instr_limit: Option<u64>,
    pub sparsity: Option<Sparsity>,
    /// Non-memory ticks per innermost iteration.
    pub body_cost: u32,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            partial_sums: true,
            threads: 1,
            instr_limit: None,
            sparsity: None,
            body_cost: DEFAULT_BODY_COST,
        }
    }
}

impl TraceOptions {
    pub fn validate(&self) -> Result<()> {
        if self.threads == 0 || self.threads > u16::MAX as usize {
            return Err(Error::Config(format!(
                "thread count must be in 1..={}, got {}",
                u16::MAX,
                self.threads
            )));
        }
        if let Some(s) = &self.sparsity {
            for (name, d) in [("weight", s.weight_density), ("activation", s.activation_density)] {
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::Config(format!("{name} density must lie in [0, 1], got {d}")));
                }
            }
        }
        Ok(())
    }
}

/// Static-schedule chunk `[lo, hi)` of `n` outer iterations owned by `thread`,
/// split the way libgomp does: the first `n % threads` threads get one extra.
pub fn static_chunk(n: usize, threads: usize, thread: usize) -> (usize, usize) {
    let q = n / threads;
    let r = n % threads;
    let lo = thread * q + thread.min(r);
    let len = q + usize::from(thread < r);
    (lo, lo + len)
}

/// Zero masks (`true` = non-zero element), indexed by word offset.
#[derive(Debug, Clone)]
pub struct SparsityMasks {
    pub weights: Vec<bool>,
    pub input: Vec<bool>,
}

impl SparsityMasks {
    pub fn generate(layer: &LayerParams, s: &Sparsity) -> Self {
        let mut r = rng::seeded(s.seed);
        let weights = (0..layer.weights_len())
            .map(|_| r.random::<f64>() < s.weight_density)
            .collect();
        let input = (0..layer.input_len())
            .map(|_| r.random::<f64>() < s.activation_density)
            .collect();
        SparsityMasks { weights, input }
    }

    /// Innermost iterations where both operands are non-zero.
    pub fn active_iterations(&self, layer: &LayerParams) -> u64 {
        let (hp, wp) = (layer.in_h(), layer.in_w());
        let mut total = 0u64;
        for i in 0..layer.in_channels {
            for ky in 0..layer.ker_h {
                for kx in 0..layer.ker_w {
                    let mut live_inputs = 0u64;
                    for y in 0..layer.img_h {
                        let row = i * hp * wp + (y + ky) * wp + kx;
                        live_inputs += self.input[row..row + layer.img_w].iter().filter(|&&b| b).count() as u64;
                    }
                    let live_weights = (0..layer.out_channels)
                        .filter(|&o| self.weights[((o * layer.in_channels + i) * layer.ker_h + ky) * layer.ker_w + kx])
                        .count() as u64;
                    total += live_inputs * live_weights;
                }
            }
        }
        total
    }
}

/// Loop-nest cursor of one logical thread.
#[derive(Debug, Clone)]
struct Cursor {
    idx: [usize; 6],
    in_off: u64,
    w_off: u64,
    out_off: u64,
    done: bool,
}

/// Per-position constants of the nest.
#[derive(Debug, Clone)]
struct Nest {
    extents: [usize; 6],
    in_stride: [u64; 6],
    w_stride: [u64; 6],
    out_stride: [u64; 6],
    out_depth: usize,
}

const BUF: usize = 8;

/// Lazily generated memory-reference stream for one
/// `(layer, permutation, options)` run.
pub struct TraceGenerator {
    layout: ArrayLayout,
    opts: TraceOptions,
    nest: Nest,
    cursors: Vec<Cursor>,
    chunk_hi: Vec<usize>,
    atomic: bool,
    masks: Option<SparsityMasks>,
    turn: usize,
    live: usize,
    buf: [TraceEvent; BUF],
    buf_len: usize,
    buf_pos: usize,
    emitted: u64,
}

impl TraceGenerator {
    pub fn new(layout: ArrayLayout, perm: Permutation, opts: TraceOptions) -> Result<Self> {
        opts.validate()?;
        let layer = layout.layer;
        layer.validate()?;
        let extents = perm.extents(&layer);
        let mut in_stride = [0; 6];
        let mut w_stride = [0; 6];
        let mut out_stride = [0; 6];
        for (p, &d) in perm.order().iter().enumerate() {
            (in_stride[p], w_stride[p], out_stride[p]) = layout.strides(d);
        }
        let nest = Nest {
            extents,
            in_stride,
            w_stride,
            out_stride,
            out_depth: perm.out_depth(),
        };

        let mut cursors = Vec::with_capacity(opts.threads);
        let mut chunk_hi = Vec::with_capacity(opts.threads);
        let mut live = 0;
        for t in 0..opts.threads {
            let (lo, hi) = static_chunk(extents[0], opts.threads, t);
            let mut idx = [0; 6];
            idx[0] = lo;
            let done = lo == hi;
            live += usize::from(!done);
            cursors.push(Cursor {
                idx,
                in_off: lo as u64 * in_stride[0],
                w_off: lo as u64 * w_stride[0],
                out_off: lo as u64 * out_stride[0],
                done,
            });
            chunk_hi.push(hi);
        }

        let masks = opts.sparsity.as_ref().map(|s| SparsityMasks::generate(&layer, s));
        Ok(TraceGenerator {
            layout,
            atomic: perm.needs_atomic(opts.threads),
            opts,
            nest,
            cursors,
            chunk_hi,
            masks,
            turn: 0,
            live,
            buf: [TraceEvent::Ticks { thread: 0, count: 0 }; BUF],
            buf_len: 0,
            buf_pos: 0,
            emitted: 0,
        })
    }

    pub fn layout(&self) -> &ArrayLayout {
        &self.layout
    }

    /// Instructions emitted so far.
    pub fn emitted(&self) -> u64 {
        self.emitted
    }

    fn push(&mut self, ev: TraceEvent) {
        self.buf[self.buf_len] = ev;
        self.buf_len += 1;
    }

    /// Emits one innermost iteration of the next live thread into the buffer.
    fn step(&mut self) -> bool {
        if self.live == 0 {
            return false;
        }
        let n = self.cursors.len();
        while self.cursors[self.turn].done {
            self.turn = (self.turn + 1) % n;
        }
        let t = self.turn;
        self.turn = (self.turn + 1) % n;

        let thread = t as u16;
        let cur = &self.cursors[t];
        let (in_off, w_off, out_off) = (cur.in_off, cur.w_off, cur.out_off);
        let nest = &self.nest;
        let closing = !self.opts.partial_sums || (nest.out_depth + 1..6).all(|p| cur.idx[p] + 1 == nest.extents[p]);
        let active = match &self.masks {
            Some(m) => m.weights[w_off as usize] && m.input[in_off as usize],
            None => true,
        };

        self.buf_len = 0;
        self.buf_pos = 0;
        let (in_base, w_base, out_base) = (self.layout.input_base, self.layout.weights_base, self.layout.out_base);
        if active {
            self.push(TraceEvent::Mem(MemRef {
                address: in_base + in_off * WORD_BYTES,
                kind: AccessKind::Read,
                thread,
            }));
            self.push(TraceEvent::Mem(MemRef {
                address: w_base + w_off * WORD_BYTES,
                kind: AccessKind::Read,
                thread,
            }));
        }
        // Without partial sums every active iteration updates the output; with
        // them, the register is flushed once per closing of the inner block.
        let update = if self.opts.partial_sums { closing } else { active };
        if update {
            let address = out_base + out_off * WORD_BYTES;
            self.push(TraceEvent::Mem(MemRef {
                address,
                kind: AccessKind::Read,
                thread,
            }));
            if self.atomic {
                self.push(TraceEvent::Ticks { thread, count: 1 });
            }
            self.push(TraceEvent::Mem(MemRef {
                address,
                kind: AccessKind::Write,
                thread,
            }));
        }
        let ticks = if active { self.opts.body_cost } else { 1 };
        if ticks > 0 {
            self.push(TraceEvent::Ticks { thread, count: ticks });
        }

        self.advance(t);
        true
    }

    fn advance(&mut self, t: usize) {
        let nest = &self.nest;
        let cur = &mut self.cursors[t];
        let mut p = 6;
        while p > 0 {
            p -= 1;
            let end = if p == 0 { self.chunk_hi[t] } else { nest.extents[p] };
            cur.idx[p] += 1;
            cur.in_off += nest.in_stride[p];
            cur.w_off += nest.w_stride[p];
            cur.out_off += nest.out_stride[p];
            if cur.idx[p] < end {
                return;
            }
            if p == 0 {
                break;
            }
            let span = end as u64;
            cur.idx[p] = 0;
            cur.in_off -= span * nest.in_stride[p];
            cur.w_off -= span * nest.w_stride[p];
            cur.out_off -= span * nest.out_stride[p];
        }
        cur.done = true;
        self.live -= 1;
    }
}

impl Iterator for TraceGenerator {
    type Item = TraceEvent;

    #[inline]
    fn next(&mut self) -> Option<TraceEvent> {
        let limit = self.opts.instr_limit.unwrap_or(u64::MAX);
        if self.emitted >= limit {
            return None;
        }
        if self.buf_pos == self.buf_len && !self.step() {
            return None;
        }
        let mut ev = self.buf[self.buf_pos];
        self.buf_pos += 1;
        if let TraceEvent::Ticks { count, .. } = &mut ev {
            let room = limit - self.emitted;
            if (*count as u64) > room {
                *count = room as u32;
            }
        }
        self.emitted += ev.weight();
        Some(ev)
    }
}

/// Closed-form tallies of a trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefCount {
    pub reads: u64,
    pub writes: u64,
    pub ticks: u64,
}

impl RefCount {
    pub fn refs(&self) -> u64 {
        self.reads + self.writes
    }

    pub fn instructions(&self) -> u64 {
        self.refs() + self.ticks
    }

    pub fn tally(events: impl IntoIterator<Item = TraceEvent>) -> Self {
        let mut c = RefCount::default();
        for ev in events {
            match ev {
                TraceEvent::Mem(MemRef {
                    kind: AccessKind::Read, ..
                }) => c.reads += 1,
                TraceEvent::Mem(MemRef {
                    kind: AccessKind::Write,
                    ..
                }) => c.writes += 1,
                TraceEvent::Ticks { count, .. } => c.ticks += count as u64,
            }
        }
        c
    }
}

/// Reads, writes and ticks of the trace `generate_trace` would produce,
/// computed without walking the nest. An instruction limit shorter than the
/// full trace falls back to tallying the truncated stream.
pub fn ref_count(layer: &LayerParams, perm: Permutation, opts: &TraceOptions) -> Result<RefCount> {
    opts.validate()?;
    layer.validate()?;
    let iterations = layer.iteration_count();
    let active = match &opts.sparsity {
        Some(s) => SparsityMasks::generate(layer, s).active_iterations(layer),
        None => iterations,
    };
    let updates = if opts.partial_sums {
        perm.partial_sum_updates(layer)
    } else {
        active
    };
    let atomic_ticks = if perm.needs_atomic(opts.threads) { updates } else { 0 };
    let full = RefCount {
        reads: 2 * active + updates,
        writes: updates,
        ticks: opts.body_cost as u64 * active + (iterations - active) + atomic_ticks,
    };
    match opts.instr_limit {
        Some(limit) if limit < full.instructions() => {
            let gen = TraceGenerator::new(ArrayLayout::new(*layer), perm, *opts)?;
            Ok(RefCount::tally(gen))
        }
        _ => Ok(full),
    }
}

/// Writes the memory references of a trace as `address,kind,thread` CSV rows.
pub fn write_trace_csv<W: Write>(events: impl IntoIterator<Item = TraceEvent>, out: W) -> Result<u64> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "kind", "thread"])?;
    let mut n = 0;
    for ev in events {
        if let TraceEvent::Mem(m) = ev {
            let kind = match m.kind {
                AccessKind::Read => "R",
                AccessKind::Write => "W",
            };
            w.write_record([m.address.to_string(), kind.to_string(), m.thread.to_string()])?;
            n += 1;
        }
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(n)
}

/// Writes memory references as packed little-endian records:
/// `u64 address, u8 kind (0 = read, 1 = write), u16 thread`.
pub fn write_trace_binary<W: Write>(events: impl IntoIterator<Item = TraceEvent>, mut out: W) -> std::io::Result<u64> {
    let mut n = 0;
    for ev in events {
        if let TraceEvent::Mem(m) = ev {
            out.write_all(&m.address.to_le_bytes())?;
            out.write_all(&[u8::from(m.kind == AccessKind::Write)])?;
            out.write_all(&m.thread.to_le_bytes())?;
            n += 1;
        }
    }
    out.flush()?;
    Ok(n)
}
