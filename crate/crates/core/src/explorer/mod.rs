//! Sweeps over layers, loop orders, cache hierarchies and thread counts.
//!
//! Every point of a [`DesignSpace`] is simulated independently on a bounded
//! worker pool. Results stream to a `.partial` file through a single writer
//! and are rewritten sorted by key once the sweep completes, so the final
//! file does not depend on completion order or worker count.

pub mod presets;
mod space;
mod tiles;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cache::{simulate, simulate_opt, BufferedTrace, CacheConfig, CacheStats};
use crate::conv::{ArrayLayout, LayerParams, Permutation};
use crate::error::{Error, Result};
use crate::permindex::{all_permutations, ham_index, lex_index, perm_from_lex, PERM_COUNT};
use crate::trace::{Sparsity, TraceGenerator, TraceOptions, DEFAULT_BODY_COST};

pub use space::SpaceFile;
pub use tiles::{
    full_utilization_splits, split_report, tile_cache_config, tile_sweep, SplitReport, SplitRow, TileConfig,
    TileOptions, TileResult, L1_KB_PER_TILE, THREADS_PER_TILE,
};

/// Environment variable capping the worker pool.
pub const WORKERS_ENV: &str = "LOOPNEST_WORKERS";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedLayer {
    pub id: String,
    pub params: LayerParams,
}

impl NamedLayer {
    pub fn new(id: &str, params: LayerParams) -> Self {
        NamedLayer {
            id: id.to_string(),
            params,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PermSelection {
    All,
    /// Lexicographic indices.
    List(Vec<usize>),
    Sample {
        size: usize,
        seed: u64,
    },
}

impl PermSelection {
    pub fn resolve(&self) -> Result<Vec<Permutation>> {
        match self {
            PermSelection::All => Ok(all_permutations()),
            PermSelection::List(lex) => {
                let set: BTreeSet<usize> = lex.iter().copied().collect();
                set.into_iter().map(perm_from_lex).collect()
            }
            PermSelection::Sample { size, seed } => {
                if *size == 0 || *size > PERM_COUNT {
                    return Err(Error::Config(format!("sample size {size} outside 1..={PERM_COUNT}")));
                }
                let mut rng = crate::rng::seeded(*seed);
                let mut picked = rand::seq::index::sample(&mut rng, PERM_COUNT, *size).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(perm_from_lex).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub layers: Vec<NamedLayer>,
    pub perms: PermSelection,
    pub configs: Vec<CacheConfig>,
    pub thread_counts: Vec<usize>,
    pub instr_limit: Option<u64>,
    pub partial_sums: bool,
    pub body_cost: u32,
    pub sparsity: Option<Sparsity>,
}

/// One point of a design space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Point {
    pub layer: usize,
    pub config: usize,
    pub threads: usize,
    pub perm: Permutation,
}

/// Unique identity of a result row.
pub type RowKey = (String, String, usize, usize);

impl DesignSpace {
    pub fn new(layers: Vec<NamedLayer>, configs: Vec<CacheConfig>, thread_counts: Vec<usize>) -> Self {
        DesignSpace {
            layers,
            perms: PermSelection::All,
            configs,
            thread_counts,
            instr_limit: None,
            partial_sums: true,
            body_cost: DEFAULT_BODY_COST,
            sparsity: None,
        }
    }

    pub fn with_perms(mut self, perms: PermSelection) -> Self {
        self.perms = perms;
        self
    }

    pub fn with_limit(mut self, limit: Option<u64>) -> Self {
        self.instr_limit = limit;
        self
    }

    pub fn trace_options(&self, threads: usize) -> TraceOptions {
        TraceOptions {
            partial_sums: self.partial_sums,
            threads,
            instr_limit: self.instr_limit,
            sparsity: self.sparsity,
            body_cost: self.body_cost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.configs.is_empty() || self.thread_counts.is_empty() {
            return Err(Error::Config("design space has an empty axis".into()));
        }
        let mut ids = BTreeSet::new();
        for l in &self.layers {
            l.params.validate()?;
            if !ids.insert(&l.id) {
                return Err(Error::Config(format!("duplicate layer id `{}`", l.id)));
            }
        }
        let mut ids = BTreeSet::new();
        for c in &self.configs {
            c.validate()?;
            if !ids.insert(&c.id) {
                return Err(Error::Config(format!("duplicate cache config id `{}`", c.id)));
            }
        }
        for &t in &self.thread_counts {
            self.trace_options(t).validate()?;
        }
        if self.perms.resolve()?.is_empty() {
            return Err(Error::Config("permutation selection is empty".into()));
        }
        if self.configs.iter().any(CacheConfig::uses_opt) {
            let bound = BufferedTrace::DEFAULT_BOUND as u64;
            for l in &self.layers {
                // Two reads, an out update pair, an atomic tick and a body
                // tick batch per innermost iteration at most.
                let worst = self.instr_limit.unwrap_or(l.params.iteration_count().saturating_mul(6));
                if worst > bound {
                    return Err(Error::Config(format!(
                        "OPT replacement buffers the whole trace; layer `{}` may produce {worst} events, \
                         above the {bound}-event bound; set an instruction limit",
                        l.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// All points, in key order.
    pub fn points(&self) -> Result<Vec<Point>> {
        let perms = self.perms.resolve()?;
        let mut layer_order: Vec<usize> = (0..self.layers.len()).collect();
        layer_order.sort_by(|&a, &b| self.layers[a].id.cmp(&self.layers[b].id));
        let mut config_order: Vec<usize> = (0..self.configs.len()).collect();
        config_order.sort_by(|&a, &b| self.configs[a].id.cmp(&self.configs[b].id));
        let threads: BTreeSet<usize> = self.thread_counts.iter().copied().collect();

        let mut out = Vec::with_capacity(self.run_count()?);
        for &layer in &layer_order {
            for &config in &config_order {
                for &t in &threads {
                    for &perm in &perms {
                        out.push(Point {
                            layer,
                            config,
                            threads: t,
                            perm,
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn run_count(&self) -> Result<usize> {
        let threads: BTreeSet<usize> = self.thread_counts.iter().copied().collect();
        Ok(self.layers.len() * self.configs.len() * threads.len() * self.perms.resolve()?.len())
    }

    pub fn key(&self, p: &Point) -> RowKey {
        (
            self.layers[p.layer].id.clone(),
            self.configs[p.config].id.clone(),
            p.threads,
            lex_index(p.perm),
        )
    }

    /// Hex SHA-256 of the space's canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("design spaces always serialise");
        hex(&Sha256::digest(&json))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One persisted run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepResult {
    pub layer_id: String,
    pub out_ch: usize,
    pub in_ch: usize,
    pub img_w: usize,
    pub img_h: usize,
    pub ker_w: usize,
    pub ker_h: usize,
    pub perm_lex: usize,
    pub perm_ham: usize,
    pub order: String,
    pub config_id: String,
    pub threads: usize,
    /// Cycles of the slowest thread.
    pub cycles: u64,
    /// Cycles summed over all threads.
    pub total_cycles: u64,
    pub l1_misses: u64,
    pub l2_misses: u64,
    pub memory_accesses: u64,
    pub refs: u64,
    pub ticks: u64,
}

impl SweepResult {
    pub fn key(&self) -> RowKey {
        (
            self.layer_id.clone(),
            self.config_id.clone(),
            self.threads,
            self.perm_lex,
        )
    }

    fn from_stats(layer: &NamedLayer, config: &CacheConfig, threads: usize, perm: Permutation, s: &CacheStats) -> Self {
        let p = layer.params;
        let misses = |k: usize| s.levels.get(k).map_or(0, |l| l.misses);
        SweepResult {
            layer_id: layer.id.clone(),
            out_ch: p.out_channels,
            in_ch: p.in_channels,
            img_w: p.img_w,
            img_h: p.img_h,
            ker_w: p.ker_w,
            ker_h: p.ker_h,
            perm_lex: lex_index(perm),
            perm_ham: ham_index(perm),
            order: perm.to_string(),
            config_id: config.id.clone(),
            threads,
            cycles: s.makespan(),
            total_cycles: s.cycles,
            l1_misses: misses(0),
            l2_misses: misses(1),
            memory_accesses: s.memory_accesses,
            refs: s.refs(),
            ticks: s.nonmem_ticks,
        }
    }
}

/// Simulates one loop order of one layer on one hierarchy.
pub fn simulate_run(
    layer: &LayerParams,
    perm: Permutation,
    config: &CacheConfig,
    opts: TraceOptions,
) -> Result<CacheStats> {
    let gen = TraceGenerator::new(ArrayLayout::new(*layer), perm, opts)?;
    if config.uses_opt() {
        simulate_opt(&BufferedTrace::collect(gen, None)?, config)
    } else {
        simulate(gen, config)
    }
}

pub fn evaluate(space: &DesignSpace, p: &Point) -> Result<SweepResult> {
    let layer = &space.layers[p.layer];
    let config = &space.configs[p.config];
    let stats = simulate_run(&layer.params, p.perm, config, space.trace_options(p.threads))?;
    Ok(SweepResult::from_stats(layer, config, p.threads, p.perm, &stats))
}

/// Worker count from `LOOPNEST_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn sort_rows(rows: &mut [SweepResult]) {
    rows.sort_by(|a, b| {
        (&a.layer_id, &a.config_id, a.threads, a.perm_lex).cmp(&(&b.layer_id, &b.config_id, b.threads, b.perm_lex))
    });
}

/// Runs every point and returns the rows in key order.
pub fn sweep_in_memory(space: &DesignSpace, workers: usize) -> Result<Vec<SweepResult>> {
    space.validate()?;
    let points = space.points()?;
    let mut rows: Vec<SweepResult> =
        pool(workers)?.install(|| points.par_iter().map(|p| evaluate(space, p)).collect::<Result<_>>())?;
    sort_rows(&mut rows);
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOptions {
    pub workers: usize,
    /// Keep rows already present in the output or its partial file.
    pub resume: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            workers: default_workers(),
            resume: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SweepSummary {
    pub points: usize,
    pub computed: usize,
    pub reused: usize,
}

/// Description written next to a result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub space_sha256: String,
    pub rows: usize,
    pub space: DesignSpace,
}

pub fn partial_path(out: &Path) -> PathBuf {
    suffixed(out, ".partial")
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    suffixed(out, ".json")
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn read_sidecar(out: &Path) -> Result<Sidecar> {
    let path = sidecar_path(out);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reads a result file written by [`run_sweep`] or [`write_results`].
pub fn read_results(path: &Path) -> Result<Vec<SweepResult>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_results<W: Write>(rows: &[SweepResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<results>", e))?;
    Ok(())
}

/// Rows of a partial file; a torn final line from an interrupted run is
/// dropped.
fn read_partial(path: &Path) -> Result<Vec<SweepResult>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut rows = Vec::new();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(BufReader::new(file));
    for rec in rdr.deserialize::<SweepResult>() {
        match rec {
            Ok(r) => rows.push(r),
            Err(_) => break,
        }
    }
    Ok(rows)
}

/// Runs a sweep into `out`, skipping keys already recorded when resuming.
pub fn run_sweep(space: &DesignSpace, out: &Path, opts: SweepOptions) -> Result<SweepSummary> {
    space.validate()?;
    let fingerprint = space.fingerprint();
    let partial = partial_path(out);

    let mut done: BTreeMap<RowKey, SweepResult> = BTreeMap::new();
    if opts.resume {
        if out.exists() {
            match read_sidecar(out) {
                Ok(side) if side.space_sha256 != fingerprint => {
                    return Err(Error::Config(format!(
                        "{} was produced by a different design space; choose another path or disable resume",
                        out.display()
                    )))
                }
                _ => {}
            }
            for r in read_results(out)? {
                done.insert(r.key(), r);
            }
        }
        for r in read_partial(&partial)? {
            done.insert(r.key(), r);
        }
    } else if partial.exists() {
        fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
    }

    let points = space.points()?;
    let wanted: BTreeSet<RowKey> = points.iter().map(|p| space.key(p)).collect();
    done.retain(|k, _| wanted.contains(k));
    let pending: Vec<Point> = points
        .iter()
        .filter(|p| !done.contains_key(&space.key(p)))
        .copied()
        .collect();
    let reused = points.len() - pending.len();

    if !pending.is_empty() {
        // Rewrite the partial file from the rows kept so far, then append.
        let mut file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&partial)
            .map_err(|e| Error::io(&partial, e))?;
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut file);
            for r in done.values() {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io(&partial, e))?;
        }

        let (tx, rx) = mpsc::channel::<SweepResult>();
        let writer_path = partial.clone();
        let writer = std::thread::spawn(move || -> Result<Vec<SweepResult>> {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            let mut rows = Vec::new();
            for r in rx {
                w.serialize(&r)?;
                w.flush().map_err(|e| Error::io(&writer_path, e))?;
                rows.push(r);
            }
            Ok(rows)
        });

        let run = pool(opts.workers)?.install(|| {
            pending.par_iter().try_for_each_with(tx, |tx, p| {
                let row = evaluate(space, p)?;
                tx.send(row)
                    .map_err(|_| Error::Config("result writer stopped early".into()))
            })
        });
        let written = writer
            .join()
            .map_err(|_| Error::Config("result writer panicked".into()))?;
        // A writer failure surfaces as a send error above; report the cause.
        let written = written?;
        run?;
        for r in written {
            done.insert(r.key(), r);
        }
    }

    let mut rows: Vec<SweepResult> = done.into_values().collect();
    sort_rows(&mut rows);
    if rows.len() != points.len() {
        return Err(Error::Coverage(format!(
            "expected {} rows, have {}; partial results kept in {}",
            points.len(),
            rows.len(),
            partial.display()
        )));
    }

    let tmp = suffixed(out, ".tmp");
    {
        let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        write_results(&rows, std::io::BufWriter::new(file))?;
    }
    fs::rename(&tmp, out).map_err(|e| Error::io(out, e))?;
    let side = Sidecar {
        space_sha256: fingerprint,
        rows: rows.len(),
        space: space.clone(),
    };
    let side_path = sidecar_path(out);
    let mut json = serde_json::to_string_pretty(&side)?;
    json.push('\n');
    fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))?;
    if partial.exists() {
        fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    Ok(SweepSummary {
        points: points.len(),
        computed: pending.len(),
        reused,
    })
}
