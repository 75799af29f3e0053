use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use loopnest::analysis::{self, export, Axis, Metric};
use loopnest::cache::{windowed_ipc, CacheConfig, Replacement};
use loopnest::codegen::{self, CodegenOptions};
use loopnest::conv::{oracle_convolve, permuted_convolve, Grid, LayerParams, Permutation};
use loopnest::explorer::{
    self, presets, run_sweep, split_report, tile_sweep, DesignSpace, NamedLayer, PermSelection, SpaceFile,
    SweepOptions, TileOptions,
};
use loopnest::permindex::{self, all_permutations, ham_index, lex_index, IndexScheme, PermIndex};
use loopnest::trace::{self, Sparsity, TraceEvent, TraceGenerator, TraceOptions, DEFAULT_BODY_COST};
use loopnest::ArrayLayout;

#[derive(Debug, Parser)]
#[command(name = "loopnest", version, about = "Loop-order exploration for direct convolution")]
pub struct Cli {
    /// Seed for every random choice (replacement, sparsity masks, sampling).
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the index table of all loop orders.
    Perms(PermsArgs),
    /// Generate a memory reference trace.
    Trace(TraceArgs),
    /// Simulate one loop order on one cache hierarchy.
    Simulate(SimulateArgs),
    /// Emit a C implementation of a loop order.
    EmitC(EmitArgs),
    /// Sweep a design space into a result file.
    Sweep(SweepArgs),
    /// Simulate every split of a chip's tiles between compute and L2.
    TileSweep(TileArgs),
    /// Analyse sweep results or traces.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Check every loop order against the reference convolution.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct PermsArgs {
    /// Number of elements; 6 gives the loop-order table.
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u8).range(1..=8))]
    n: u8,
}

#[derive(Debug, Args, Clone)]
struct LayerArg {
    /// Layer extents: out_ch,in_ch,img_w,img_h,ker_w,ker_h.
    #[arg(long, value_parser = parse_layer)]
    layer: LayerParams,
}

#[derive(Debug, Args, Clone)]
#[group(multiple = false)]
struct PermArg {
    /// Loop order by lexicographic index.
    #[arg(long)]
    perm_lex: Option<usize>,
    /// Loop order by hamiltonian index.
    #[arg(long)]
    perm_ham: Option<usize>,
    /// Loop order by reverse-lexicographic index.
    #[arg(long)]
    perm_revlex: Option<usize>,
    /// Loop order spelled out, outermost first, e.g. o-i-y-x-ky-kx.
    #[arg(long)]
    perm: Option<String>,
}

impl PermArg {
    fn resolve(&self) -> Result<Permutation> {
        let by = |value, scheme| -> Result<Permutation> { Ok(permindex::perm_of(PermIndex::new(value, scheme)?)?) };
        match (self.perm_lex, self.perm_ham, self.perm_revlex, &self.perm) {
            (Some(v), ..) => by(v, IndexScheme::Lex),
            (_, Some(v), ..) => by(v, IndexScheme::Hamiltonian),
            (_, _, Some(v), _) => by(v, IndexScheme::RevLex),
            (.., Some(s)) => Ok(s.parse()?),
            _ => Ok(Permutation::CANONICAL),
        }
    }
}

#[derive(Debug, Args, Clone)]
struct RunArgs {
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Stop after this many instructions.
    #[arg(long)]
    limit: Option<u64>,
    /// Write the output on every iteration instead of accumulating in a register.
    #[arg(long)]
    no_partial_sums: bool,
    /// Skip iterations with a zero operand: weight density, activation density.
    #[arg(long, value_parser = parse_pair)]
    sparsity: Option<(f64, f64)>,
    /// Non-memory instructions per loop body.
    #[arg(long, default_value_t = DEFAULT_BODY_COST)]
    body_cost: u32,
}

impl RunArgs {
    fn options(&self, seed: u64) -> TraceOptions {
        TraceOptions {
            partial_sums: !self.no_partial_sums,
            threads: self.threads,
            instr_limit: self.limit,
            sparsity: self.sparsity.map(|(w, a)| Sparsity {
                weight_density: w,
                activation_density: a,
                seed,
            }),
            body_cost: self.body_cost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CachePreset {
    Loki,
    Small,
    Medium,
    Large,
}

impl CachePreset {
    fn name(self) -> &'static str {
        match self {
            CachePreset::Loki => "loki",
            CachePreset::Small => "small",
            CachePreset::Medium => "medium",
            CachePreset::Large => "large",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Policy {
    Lru,
    Random,
    Opt,
}

#[derive(Debug, Args, Clone)]
struct CacheArgs {
    #[arg(long, value_enum, default_value_t = CachePreset::Loki)]
    config: CachePreset,
    /// Hierarchy from a JSON or TOML file instead of a preset.
    #[arg(long, conflicts_with = "config")]
    config_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    l1_policy: Option<Policy>,
    #[arg(long, value_enum)]
    l2_policy: Option<Policy>,
}

impl CacheArgs {
    fn resolve(&self, seed: u64) -> Result<CacheConfig> {
        let mut cfg = match &self.config_file {
            Some(path) => load_cache_config(path)?,
            None => CacheConfig::preset(self.config.name(), seed)?,
        };
        for (level, policy) in [(0, self.l1_policy), (1, self.l2_policy)] {
            if let Some(p) = policy {
                if level >= cfg.levels.len() {
                    bail!("hierarchy `{}` has no level {}", cfg.id, level + 1);
                }
                let r = match p {
                    Policy::Lru => Replacement::Lru,
                    Policy::Opt => Replacement::Opt,
                    Policy::Random => Replacement::Random {
                        seed: loopnest::rng::derive(seed, level as u64),
                    },
                };
                cfg = cfg.with_policy(level, r);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_cache_config(path: &Path) -> Result<CacheConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    layer: LayerArg,
    #[command(flatten)]
    perm: PermArg,
    #[command(flatten)]
    run: RunArgs,
    /// Only print reference counts.
    #[arg(long)]
    count: bool,
    /// Packed binary records instead of CSV.
    #[arg(long)]
    binary: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    layer: LayerArg,
    #[command(flatten)]
    perm: PermArg,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    cache: CacheArgs,
}

#[derive(Debug, Args)]
struct EmitArgs {
    #[command(flatten)]
    layer: LayerArg,
    #[command(flatten)]
    perm: PermArg,
    /// Emit all 720 loop orders.
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    no_partial_sums: bool,
    /// Fill inputs deterministically and print an output checksum.
    #[arg(long)]
    validation: bool,
    /// Name used in file names; defaults to the extents.
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayerPreset {
    Squeezenet,
    #[value(name = "synthetic-216")]
    Synthetic216,
    #[value(name = "synthetic-36")]
    Synthetic36,
}

impl LayerPreset {
    fn layers(self) -> Vec<NamedLayer> {
        match self {
            LayerPreset::Squeezenet => presets::squeezenet(),
            LayerPreset::Synthetic216 => presets::synthetic_216(),
            LayerPreset::Synthetic36 => presets::synthetic_36(),
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    preset: Option<LayerPreset>,
    /// Design space file (TOML); other flags add to or override it.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Extra layers, `id=extents` or bare extents.
    #[arg(long = "layer", value_parser = parse_named_layer)]
    layers: Vec<NamedLayer>,
    #[arg(long, value_delimiter = ',')]
    threads: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',')]
    config: Vec<CachePreset>,
    #[arg(long)]
    limit: Option<u64>,
    /// `all`, a comma-separated list of lex indices, or `sample:N`.
    #[arg(long, value_parser = parse_perm_selection)]
    perms: Option<PermSelectionArg>,
    #[arg(long)]
    no_partial_sums: bool,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; defaults to LOOPNEST_WORKERS or the core count.
    #[arg(long)]
    workers: Option<usize>,
    /// Recompute everything instead of resuming.
    #[arg(long)]
    fresh: bool,
}

#[derive(Debug, Clone)]
enum PermSelectionArg {
    All,
    List(Vec<usize>),
    Sample(usize),
}

#[derive(Debug, Args)]
struct TileArgs {
    #[arg(long = "layer", value_parser = parse_named_layer)]
    layers: Vec<NamedLayer>,
    #[arg(long, value_enum)]
    preset: Option<LayerPreset>,
    #[command(flatten)]
    perm: PermArg,
    #[arg(long, default_value_t = 16)]
    total_tiles: usize,
    #[arg(long, default_value_t = 64)]
    bank_kb: u64,
    #[arg(long, default_value_t = 100_000_000)]
    limit: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Rank loop orders by mean normalised speedup.
    Rank(RankArgs),
    /// Rank sets of k loop orders, scored by their best member per case.
    Pairs(PairsArgs),
    /// Random-sample size needed to find a good loop order.
    SampleSize(SampleArgs),
    /// Mean speedups per hierarchy or thread count, for parallel coordinates.
    Stability(StabilityArgs),
    /// First-touch reuse map and working-set size of a trace.
    Reuse(ReuseArgs),
    /// Recent-IPC series of a simulation.
    Ipc(IpcArgs),
}

#[derive(Debug, Args)]
struct ResultsArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value = "cycles", value_parser = parse_metric)]
    metric: Metric,
    /// Directory for plot-ready CSV files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write a plotting script into the output directory.
    #[arg(long)]
    plot_script: bool,
}

#[derive(Debug, Args)]
struct RankArgs {
    #[command(flatten)]
    results: ResultsArgs,
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Also export the per-order signature of one case: layer[/config[/threads]].
    #[arg(long)]
    signature: Option<String>,
}

#[derive(Debug, Args)]
struct PairsArgs {
    #[command(flatten)]
    results: ResultsArgs,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = analysis::DEFAULT_BEAM_WIDTH)]
    beam: usize,
    #[arg(long, default_value_t = 20)]
    top: usize,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Fraction of good loop orders; alternative to --results.
    #[arg(long, conflicts_with = "results")]
    good_fraction: Option<f64>,
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long, default_value = "cycles", value_parser = parse_metric)]
    metric: Metric,
    /// Speedup a loop order needs to count as good.
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    #[arg(long, default_value_t = 0.683)]
    confidence: f64,
    /// Monte-Carlo trials for the cross-check; 0 skips it.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[command(flatten)]
    results: ResultsArgs,
    #[arg(long, default_value = "cache_config", value_parser = parse_axis)]
    axis: Axis,
}

#[derive(Debug, Args)]
struct ReuseArgs {
    #[command(flatten)]
    layer: LayerArg,
    #[command(flatten)]
    perm: PermArg,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 5)]
    offset_bits: u32,
    #[arg(long, default_value_t = analysis::DEFAULT_WINDOW)]
    window: usize,
    /// Write the per-access scatter here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IpcArgs {
    #[command(flatten)]
    layer: LayerArg,
    #[command(flatten)]
    perm: PermArg,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    cache: CacheArgs,
    /// Instructions per window.
    #[arg(long, default_value_t = 100_000)]
    window: u64,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Check every layer whose extents all lie in 1..=max-extent.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=4))]
    max_extent: u64,
}

fn parse_layer(s: &str) -> std::result::Result<LayerParams, String> {
    s.parse().map_err(|e: loopnest::Error| e.to_string())
}

fn parse_named_layer(s: &str) -> std::result::Result<NamedLayer, String> {
    let (id, dims) = match s.split_once('=') {
        Some((id, dims)) => (id.to_string(), dims),
        None => (String::new(), s),
    };
    let params = parse_layer(dims)?;
    let id = if id.is_empty() {
        params.positional().map(|v| v.to_string()).join("x")
    } else {
        id
    };
    Ok(NamedLayer { id, params })
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated values")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: loopnest::Error| e.to_string())
}

fn parse_axis(s: &str) -> std::result::Result<Axis, String> {
    s.parse().map_err(|e: loopnest::Error| e.to_string())
}

fn parse_perm_selection(s: &str) -> std::result::Result<PermSelectionArg, String> {
    if s == "all" {
        return Ok(PermSelectionArg::All);
    }
    if let Some(n) = s.strip_prefix("sample:") {
        return n.parse().map(PermSelectionArg::Sample).map_err(|e| format!("{e}"));
    }
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map(PermSelectionArg::List)
}

/// Writes rows to stdout as CSV with a header or as a JSON array.
fn emit<T: Serialize>(format: Format, rows: &[T]) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, rows)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let format = cli.format;
    match cli.command {
        Command::Perms(a) => perms(format, a),
        Command::Trace(a) => trace_cmd(seed, format, a),
        Command::Simulate(a) => simulate(seed, format, a),
        Command::EmitC(a) => emit_c(seed, a),
        Command::Sweep(a) => sweep(seed, a),
        Command::TileSweep(a) => tiles(seed, format, a),
        Command::Analyze(a) => analyze(seed, format, a),
        Command::Validate(a) => validate(seed, a),
    }
}

#[derive(Serialize)]
struct PathRow {
    hamiltonian: usize,
    lex: usize,
    permutation: String,
}

fn perms(format: Format, a: PermsArgs) -> Result<()> {
    if a.n == 6 {
        return emit(format, &permindex::index_table());
    }
    let rows: Vec<PathRow> = permindex::sjt_path(a.n as usize)?
        .into_iter()
        .enumerate()
        .map(|(h, p)| PathRow {
            hamiltonian: h,
            lex: permindex::lex_rank(&p).expect("path entries are permutations"),
            permutation: p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
        })
        .collect();
    emit(format, &rows)
}

fn trace_cmd(seed: u64, format: Format, a: TraceArgs) -> Result<()> {
    let perm = a.perm.resolve()?;
    let opts = a.run.options(seed);
    if a.count {
        let c = trace::ref_count(&a.layer.layer, perm, &opts)?;
        #[derive(Serialize)]
        struct Row {
            order: String,
            reads: u64,
            writes: u64,
            refs: u64,
            ticks: u64,
            instructions: u64,
        }
        return emit(
            format,
            &[Row {
                order: perm.to_string(),
                reads: c.reads,
                writes: c.writes,
                refs: c.refs(),
                ticks: c.ticks,
                instructions: c.instructions(),
            }],
        );
    }
    let gen = TraceGenerator::new(ArrayLayout::new(a.layer.layer), perm, opts)?;
    let out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let n = if a.binary {
        trace::write_trace_binary(gen, out)?
    } else {
        trace::write_trace_csv(gen, out)?
    };
    eprintln!("{n} references, loop order {perm}");
    Ok(())
}

#[derive(Serialize)]
struct StatsRow {
    layer: String,
    order: String,
    perm_lex: usize,
    perm_ham: usize,
    config_id: String,
    threads: usize,
    cycles: u64,
    total_cycles: u64,
    l1_hits: u64,
    l1_misses: u64,
    l2_hits: u64,
    l2_misses: u64,
    memory_accesses: u64,
    refs: u64,
    ticks: u64,
}

fn simulate(seed: u64, format: Format, a: SimulateArgs) -> Result<()> {
    let perm = a.perm.resolve()?;
    let cfg = a.cache.resolve(seed)?;
    let opts = a.run.options(seed);
    let s = explorer::simulate_run(&a.layer.layer, perm, &cfg, opts)?;
    let level = |k: usize| s.levels.get(k).copied().unwrap_or_default();
    let row = StatsRow {
        layer: a.layer.layer.to_string(),
        order: perm.to_string(),
        perm_lex: lex_index(perm),
        perm_ham: ham_index(perm),
        config_id: cfg.id.clone(),
        threads: opts.threads,
        cycles: s.makespan(),
        total_cycles: s.cycles,
        l1_hits: level(0).hits,
        l1_misses: level(0).misses,
        l2_hits: level(1).hits,
        l2_misses: level(1).misses,
        memory_accesses: s.memory_accesses,
        refs: s.refs(),
        ticks: s.nonmem_ticks,
    };
    eprintln!(
        "{perm} on {}: {} cycles, {} refs, L1 misses {}, L2 misses {}",
        cfg.id, row.cycles, row.refs, row.l1_misses, row.l2_misses
    );
    emit(format, &[row])
}

fn emit_c(seed: u64, a: EmitArgs) -> Result<()> {
    let layer = a.layer.layer;
    let label = a
        .label
        .clone()
        .unwrap_or_else(|| layer.positional().map(|v| v.to_string()).join("x"));
    let opts = CodegenOptions {
        threads: a.threads,
        partial_sums: !a.no_partial_sums,
        emit_validation: a.validation,
        seed: seed as u32,
    };
    let perms = if a.all {
        all_permutations()
    } else {
        vec![a.perm.resolve()?]
    };
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    for perm in &perms {
        let path = a.out_dir.join(codegen::file_name(&label, *perm));
        fs::write(&path, codegen::emit_c(&layer, *perm, &opts)?)
            .with_context(|| format!("writing {}", path.display()))?;
        if perms.len() == 1 {
            println!("{}", path.display());
        }
    }
    if a.validation {
        eprintln!("expected checksum {}", codegen::expected_checksum(&layer, opts.seed)?);
    }
    eprintln!("wrote {} file(s) to {}", perms.len(), a.out_dir.display());
    Ok(())
}

fn sweep(seed: u64, a: SweepArgs) -> Result<()> {
    let mut space = match &a.space {
        Some(path) => SpaceFile::load(path)?.build(seed)?,
        None => DesignSpace::new(Vec::new(), vec![CacheConfig::loki(seed)], vec![1]),
    };
    if let Some(p) = a.preset {
        space.layers.extend(p.layers());
    }
    space.layers.extend(a.layers.iter().cloned());
    if !a.threads.is_empty() {
        space.thread_counts = a.threads.clone();
    }
    if !a.config.is_empty() {
        space.configs = a
            .config
            .iter()
            .map(|c| CacheConfig::preset(c.name(), seed))
            .collect::<loopnest::Result<_>>()?;
    }
    if a.limit.is_some() {
        space.instr_limit = a.limit;
    }
    if a.no_partial_sums {
        space.partial_sums = false;
    }
    if let Some(sel) = &a.perms {
        space.perms = match sel {
            PermSelectionArg::All => PermSelection::All,
            PermSelectionArg::List(v) => PermSelection::List(v.clone()),
            PermSelectionArg::Sample(n) => PermSelection::Sample { size: *n, seed },
        };
    }
    if space.layers.is_empty() {
        bail!("no layers: give --preset, --layer or a --space file with layers");
    }
    space.validate()?;
    let opts = SweepOptions {
        workers: a.workers.unwrap_or_else(explorer::default_workers),
        resume: !a.fresh,
    };
    eprintln!(
        "sweeping {} runs ({} layers) with {} workers",
        space.run_count()?,
        space.layers.len(),
        opts.workers
    );
    let summary = run_sweep(&space, &a.out, opts)?;
    eprintln!(
        "{} runs: {} computed, {} reused; results in {}",
        summary.points,
        summary.computed,
        summary.reused,
        a.out.display()
    );
    Ok(())
}

fn tiles(seed: u64, format: Format, a: TileArgs) -> Result<()> {
    let mut layers = a.layers.clone();
    if let Some(p) = a.preset {
        layers.extend(p.layers());
    }
    if layers.is_empty() {
        bail!("no layers: give --layer or --preset");
    }
    let perm = a.perm.resolve()?;
    let opts = TileOptions {
        instr_limit: Some(a.limit),
        partial_sums: true,
        seed,
    };
    let mut results = Vec::new();
    for layer in &layers {
        let rows = tile_sweep(layer, perm, a.total_tiles, a.bank_kb, &opts)?;
        let best = rows.iter().min_by_key(|r| r.cycles).expect("at least one split");
        eprintln!(
            "{}: best split {} compute / {} L2 tiles, {} cycles",
            layer.id, best.compute_tiles, best.l2_tiles, best.cycles
        );
        results.extend(rows);
    }
    let report = split_report(&results)?;
    eprintln!(
        "common split {} compute tiles: mean loss {:.2}%, max loss {:.2}%",
        report.common_compute_tiles,
        100.0 * report.mean_loss,
        100.0 * report.max_loss
    );
    if let Some(path) = &a.out {
        let mut w = csv::Writer::from_writer(create(path)?);
        for r in &results {
            w.serialize(r)?;
        }
        w.flush()?;
        let side = path.with_extension("report.json");
        fs::write(&side, serde_json::to_string_pretty(&report)? + "\n")?;
    }
    emit(format, &results)
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    create(&dir.join(name))
}

fn maybe_script(args: &ResultsArgs) -> Result<()> {
    if let (Some(dir), true) = (&args.out_dir, args.plot_script) {
        fs::write(dir.join(export::PLOT_SCRIPT_FILE), export::PLOT_SCRIPT)?;
    }
    Ok(())
}

fn load(args: &ResultsArgs) -> Result<Vec<explorer::SweepResult>> {
    let rows = explorer::read_results(&args.results)?;
    if let Ok(side) = explorer::read_sidecar(&args.results) {
        if side.space.fingerprint() != side.space_sha256 {
            bail!(
                "{}: sidecar hash does not match its design space",
                args.results.display()
            );
        }
        if side.rows != rows.len() {
            bail!(
                "{}: sidecar records {} rows, file has {}",
                args.results.display(),
                side.rows,
                rows.len()
            );
        }
    }
    Ok(rows)
}

fn analyze(seed: u64, format: Format, cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Rank(a) => {
            let rows = load(&a.results)?;
            let table = analysis::rank_permutations(&rows, a.results.metric)?;
            if table.perms.len() != permindex::PERM_COUNT {
                eprintln!(
                    "note: results cover {} of {} loop orders",
                    table.perms.len(),
                    permindex::PERM_COUNT
                );
            }
            if let Some(dir) = &a.results.out_dir {
                export::write_ranking(&table, out_file(dir, export::RANKING_FILE)?)?;
                export::write_sorted_curves(&table, out_file(dir, export::SORTED_FILE)?)?;
                if let Some(sig) = &a.signature {
                    let mut parts = sig.splitn(3, '/');
                    let layer = parts.next().unwrap_or_default();
                    let config = parts.next();
                    let threads: Option<usize> = parts.next().map(str::parse).transpose()?;
                    let case: Vec<_> = rows
                        .iter()
                        .filter(|r| {
                            r.layer_id == layer
                                && config.is_none_or(|c| r.config_id == c)
                                && threads.is_none_or(|t| r.threads == t)
                        })
                        .cloned()
                        .collect();
                    if case.is_empty() {
                        bail!("no results for case `{sig}`");
                    }
                    export::write_signature(&case, out_file(dir, export::SIGNATURE_FILE)?)?;
                }
            }
            maybe_script(&a.results)?;
            let top = &table.ranked[..a.top.min(table.ranked.len())];
            eprintln!(
                "{} cases; top mean speedup {:.4} ({}), worst case {:.4}",
                table.cases.len(),
                top[0].mean,
                top[0].order,
                top[0].min
            );
            emit(format, top)
        }
        AnalyzeCommand::Pairs(a) => {
            let rows = load(&a.results)?;
            let table = analysis::rank_permutations(&rows, a.results.metric)?;
            let combos = analysis::best_of_k(&table, a.k, a.beam)?;
            if let Some(dir) = &a.results.out_dir {
                export::write_combos(&combos, a.top.max(1000), out_file(dir, export::PAIRS_FILE)?)?;
            }
            maybe_script(&a.results)?;
            #[derive(Serialize)]
            struct Row {
                rank: usize,
                members_lex: String,
                orders: String,
                mean: f64,
                min: f64,
            }
            let out: Vec<Row> = combos
                .iter()
                .take(a.top)
                .enumerate()
                .map(|(k, c)| Row {
                    rank: k + 1,
                    members_lex: c.members.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("+"),
                    orders: c
                        .members
                        .iter()
                        .map(|&m| permindex::perm_from_lex(m).expect("lex from results").to_string())
                        .collect::<Vec<_>>()
                        .join(" + "),
                    mean: c.mean,
                    min: c.min,
                })
                .collect();
            eprintln!(
                "best single mean {:.4}; best {}-set mean {:.4}",
                table.ranked[0].mean, a.k, combos[0].mean
            );
            emit(format, &out)
        }
        AnalyzeCommand::SampleSize(a) => {
            let (g, report) = match (a.good_fraction, &a.results) {
                (Some(g), _) => (g, None),
                (None, Some(path)) => {
                    let rows = explorer::read_results(path)?;
                    let table = analysis::rank_permutations(&rows, a.metric)?;
                    let r = analysis::random_sampling_requirement(&table, a.threshold, a.confidence)?;
                    (r.good_fraction, Some(r))
                }
                (None, None) => bail!("give --good-fraction or --results"),
            };
            let m = analysis::sample_size_for(g, a.confidence)?;
            #[derive(Serialize)]
            struct Row {
                good_fraction: f64,
                confidence: f64,
                worst_case_good: Option<usize>,
                sample_size: Option<u64>,
                hit_probability: Option<f64>,
                monte_carlo: Option<f64>,
                monte_carlo_std_error: Option<f64>,
            }
            let mc = match m {
                Some(m) if a.trials > 0 => Some(analysis::monte_carlo_hit(g, m, a.trials, seed)),
                _ => None,
            };
            match m {
                Some(m) => eprintln!(
                    "{m} random loop orders find a good one with probability {:.4}",
                    analysis::hit_probability(g, m)
                ),
                None => eprintln!("no loop order is good on every case; no sample size suffices"),
            }
            emit(
                format,
                &[Row {
                    good_fraction: g,
                    confidence: a.confidence,
                    worst_case_good: report.map(|r| r.worst_case_good),
                    sample_size: m,
                    hit_probability: m.map(|m| analysis::hit_probability(g, m)),
                    monte_carlo: mc.map(|x| x.estimate),
                    monte_carlo_std_error: mc.map(|x| x.std_error),
                }],
            )
        }
        AnalyzeCommand::Stability(a) => {
            let rows = load(&a.results)?;
            let ex = analysis::stability_export(&rows, a.axis, a.results.metric)?;
            if let Some(dir) = &a.results.out_dir {
                export::write_stability(&ex, out_file(dir, export::STABILITY_FILE)?)?;
            }
            maybe_script(&a.results)?;
            for (g, name) in ex.groups.iter().enumerate() {
                let means: Vec<(usize, f64)> = ex.rows.iter().map(|r| (r.perm_lex, r.means[g])).collect();
                let table = analysis::rank_permutations(
                    &rows
                        .iter()
                        .filter(|r| match a.axis {
                            Axis::Threads => format!("threads={}", r.threads) == *name,
                            Axis::CacheConfig => r.config_id == *name,
                        })
                        .cloned()
                        .collect::<Vec<_>>(),
                    a.results.metric,
                )?;
                eprintln!(
                    "{name}: degraded group {} by mean, {} by worst case",
                    analysis::degraded_group(&means).len(),
                    analysis::degraded_by_worst_case(&table).len()
                );
            }
            emit(format, &ex.correlations)
        }
        AnalyzeCommand::Reuse(a) => {
            let perm = a.perm.resolve()?;
            let gen = TraceGenerator::new(ArrayLayout::new(a.layer.layer), perm, a.run.options(seed))?;
            let addrs = gen.filter_map(|ev| match ev {
                TraceEvent::Mem(m) => Some(m.address),
                TraceEvent::Ticks { .. } => None,
            });
            let map = analysis::reuse_map(addrs, a.offset_bits, a.window);
            if let Some(dir) = &a.out_dir {
                export::write_reuse(&map.points, out_file(dir, export::REUSE_FILE)?)?;
            }
            #[derive(Serialize)]
            struct Row {
                order: String,
                accesses: usize,
                distinct_addresses: usize,
                distinct_blocks: usize,
                window: usize,
                working_set_peak: usize,
                working_set_mean: f64,
            }
            emit(
                format,
                &[Row {
                    order: perm.to_string(),
                    accesses: map.points.len(),
                    distinct_addresses: map.distinct_addresses,
                    distinct_blocks: map.distinct_blocks,
                    window: map.working_set.window,
                    working_set_peak: map.working_set.peak,
                    working_set_mean: map.working_set.mean,
                }],
            )
        }
        AnalyzeCommand::Ipc(a) => {
            let perm = a.perm.resolve()?;
            let cfg = a.cache.resolve(seed)?;
            let gen = TraceGenerator::new(ArrayLayout::new(a.layer.layer), perm, a.run.options(seed))?;
            let series = windowed_ipc(gen, &cfg, a.window)?;
            match format {
                Format::Csv => export::write_ipc(&series, io::stdout().lock())?,
                Format::Json => emit(format, &series)?,
            }
            Ok(())
        }
    }
}

fn validate(seed: u64, a: ValidateArgs) -> Result<()> {
    let max = a.max_extent as usize;
    let perms = all_permutations();
    let mut layers = Vec::new();
    let mut dims = [1usize; 6];
    loop {
        layers.push(LayerParams::new(dims[0], dims[1], dims[2], dims[3], dims[4], dims[5])?);
        let mut k = 0;
        while k < 6 && dims[k] == max {
            dims[k] = 1;
            k += 1;
        }
        if k == 6 {
            break;
        }
        dims[k] += 1;
    }
    let mut passing = 0;
    for (n, perm) in perms.iter().enumerate() {
        let mut ok = true;
        for (k, layer) in layers.iter().enumerate() {
            let s = loopnest::rng::derive(seed, k as u64);
            let input = Grid::random(&loopnest::conv::input_shape(layer), s);
            let weights = Grid::random(&loopnest::conv::weights_shape(layer), s ^ 1);
            let expect = oracle_convolve(layer, &input, &weights)?;
            if permuted_convolve(layer, &input, &weights, *perm)? != expect {
                eprintln!("mismatch: loop order {perm} on layer {layer}");
                ok = false;
                break;
            }
        }
        passing += usize::from(ok);
        if n % 120 == 119 {
            eprintln!("checked {} loop orders", n + 1);
        }
    }
    println!("{passing}/{} permutations match oracle", perms.len());
    if passing != perms.len() {
        bail!("{} loop orders disagree with the reference", perms.len() - passing);
    }
    Ok(())
}
