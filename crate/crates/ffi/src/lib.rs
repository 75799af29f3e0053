//! C interface to the loopnest simulator.
//!
//! Hierarchies and simulation results cross the boundary as opaque handles
//! that the caller releases with the matching `_free` function. Every
//! fallible call returns a [`LoopnestStatus`]; on failure the message is
//! available from [`loopnest_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use loopnest::cache::{CacheConfig, CacheStats};
use loopnest::codegen::{self, CodegenOptions};
use loopnest::conv::LayerParams;
use loopnest::explorer::simulate_run;
use loopnest::permindex::{self, IndexScheme, PermIndex};
use loopnest::trace::{TraceOptions, DEFAULT_BODY_COST};
use loopnest::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopnestStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    Config = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopnestScheme {
    Lex = 0,
    RevLex = 1,
    Hamiltonian = 2,
}

impl From<LoopnestScheme> for IndexScheme {
    fn from(s: LoopnestScheme) -> Self {
        match s {
            LoopnestScheme::Lex => IndexScheme::Lex,
            LoopnestScheme::RevLex => IndexScheme::RevLex,
            LoopnestScheme::Hamiltonian => IndexScheme::Hamiltonian,
        }
    }
}

/// Extents of a convolution layer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopnestLayer {
    pub out_channels: u32,
    pub in_channels: u32,
    pub img_w: u32,
    pub img_h: u32,
    pub ker_w: u32,
    pub ker_h: u32,
}

/// Run parameters. An `instr_limit` of 0 means no limit.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopnestRun {
    pub perm_lex: u32,
    pub threads: u32,
    pub instr_limit: u64,
    pub partial_sums: bool,
}

/// Headline numbers of a simulation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoopnestSummary {
    /// Cycles of the slowest thread.
    pub cycles: u64,
    pub total_cycles: u64,
    pub refs: u64,
    pub ticks: u64,
    pub memory_accesses: u64,
    pub levels: u32,
}

/// Opaque cache hierarchy.
pub struct LoopnestConfig(CacheConfig);

/// Opaque simulation result.
pub struct LoopnestStats(CacheStats);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> LoopnestStatus {
    match e {
        Error::Domain(_) => LoopnestStatus::OutOfRange,
        Error::Config(_) => LoopnestStatus::Config,
        Error::Io { .. } | Error::Csv(_) => LoopnestStatus::Io,
        _ => LoopnestStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (LoopnestStatus, String)>) -> LoopnestStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LoopnestStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LoopnestStatus::Panic
        }
    }
}

fn lift(e: Error) -> (LoopnestStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (LoopnestStatus, String) {
    (LoopnestStatus::NullPointer, format!("{what} is null"))
}

fn layer_of(l: &LoopnestLayer) -> Result<LayerParams, (LoopnestStatus, String)> {
    LayerParams::new(
        l.out_channels as usize,
        l.in_channels as usize,
        l.img_w as usize,
        l.img_h as usize,
        l.ker_w as usize,
        l.ker_h as usize,
    )
    .map_err(lift)
}

fn into_c_string(s: String) -> Result<*mut c_char, (LoopnestStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (LoopnestStatus::InvalidArgument, "string contains a NUL byte".into()))
}

/// Message of the last failed call on this thread, or an empty string.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn loopnest_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a preset hierarchy (`loki`, `small`, `medium`, `large`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn loopnest_config_preset(
    name: *const c_char,
    seed: u64,
    out: *mut *mut LoopnestConfig,
) -> LoopnestStatus {
    guard(|| {
        if name.is_null() {
            return Err(null("name"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let name = CStr::from_ptr(name)
            .to_str()
            .map_err(|_| (LoopnestStatus::InvalidArgument, "name is not UTF-8".into()))?;
        let cfg = CacheConfig::preset(name, seed).map_err(lift)?;
        *out = Box::into_raw(Box::new(LoopnestConfig(cfg)));
        Ok(())
    })
}

/// Builds a hierarchy from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn loopnest_config_from_json(
    json: *const c_char,
    out: *mut *mut LoopnestConfig,
) -> LoopnestStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|_| (LoopnestStatus::InvalidArgument, "json is not UTF-8".into()))?;
        let cfg: CacheConfig =
            serde_json::from_str(text).map_err(|e| (LoopnestStatus::InvalidArgument, e.to_string()))?;
        cfg.validate().map_err(lift)?;
        *out = Box::into_raw(Box::new(LoopnestConfig(cfg)));
        Ok(())
    })
}

/// # Safety
/// `config` must come from a `loopnest_config_*` constructor and not be
/// freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn loopnest_config_free(config: *mut LoopnestConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Simulates one loop order of a layer.
///
/// # Safety
/// `layer`, `run` and `config` must be valid pointers; `out` must be a
/// valid pointer that receives a handle to free with
/// [`loopnest_stats_free`].
#[no_mangle]
pub unsafe extern "C" fn loopnest_simulate(
    layer: *const LoopnestLayer,
    run: *const LoopnestRun,
    config: *const LoopnestConfig,
    out: *mut *mut LoopnestStats,
) -> LoopnestStatus {
    guard(|| {
        if layer.is_null() {
            return Err(null("layer"));
        }
        if run.is_null() {
            return Err(null("run"));
        }
        if config.is_null() {
            return Err(null("config"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let params = layer_of(&*layer)?;
        let run = *run;
        let perm =
            permindex::perm_of(PermIndex::new(run.perm_lex as usize, IndexScheme::Lex).map_err(lift)?).map_err(lift)?;
        let opts = TraceOptions {
            partial_sums: run.partial_sums,
            threads: run.threads as usize,
            instr_limit: (run.instr_limit > 0).then_some(run.instr_limit),
            sparsity: None,
            body_cost: DEFAULT_BODY_COST,
        };
        let stats = simulate_run(&params, perm, &(*config).0, opts).map_err(lift)?;
        *out = Box::into_raw(Box::new(LoopnestStats(stats)));
        Ok(())
    })
}

/// # Safety
/// `stats` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn loopnest_stats_summary(
    stats: *const LoopnestStats,
    out: *mut LoopnestSummary,
) -> LoopnestStatus {
    guard(|| {
        if stats.is_null() {
            return Err(null("stats"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let s = &(*stats).0;
        *out = LoopnestSummary {
            cycles: s.makespan(),
            total_cycles: s.cycles,
            refs: s.refs(),
            ticks: s.nonmem_ticks,
            memory_accesses: s.memory_accesses,
            levels: s.levels.len() as u32,
        };
        Ok(())
    })
}

/// Hits and misses of one level, 0 being closest to the core.
///
/// # Safety
/// `stats`, `hits` and `misses` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn loopnest_stats_level(
    stats: *const LoopnestStats,
    level: u32,
    hits: *mut u64,
    misses: *mut u64,
) -> LoopnestStatus {
    guard(|| {
        if stats.is_null() || hits.is_null() || misses.is_null() {
            return Err(null("argument"));
        }
        let s = &(*stats).0;
        let l = s.levels.get(level as usize).ok_or_else(|| {
            (
                LoopnestStatus::OutOfRange,
                format!("level {level} outside 0..{}", s.levels.len()),
            )
        })?;
        *hits = l.hits;
        *misses = l.misses;
        Ok(())
    })
}

/// # Safety
/// `stats` must come from [`loopnest_simulate`] and not be freed twice.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn loopnest_stats_free(stats: *mut LoopnestStats) {
    if !stats.is_null() {
        drop(Box::from_raw(stats));
    }
}

/// Converts a loop-order index between schemes.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn loopnest_perm_convert(
    value: u32,
    from: LoopnestScheme,
    to: LoopnestScheme,
    out: *mut u32,
) -> LoopnestStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let perm = permindex::perm_of(PermIndex::new(value as usize, from.into()).map_err(lift)?).map_err(lift)?;
        *out = permindex::index_of(perm, to.into()).value as u32;
        Ok(())
    })
}

/// Loop order of a lexicographic index as text, outermost first. Free the
/// result with [`loopnest_string_free`].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn loopnest_perm_name(perm_lex: u32, out: *mut *mut c_char) -> LoopnestStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let perm = permindex::perm_from_lex(perm_lex as usize).map_err(lift)?;
        *out = into_c_string(perm.to_string())?;
        Ok(())
    })
}

/// C source for one loop order. Free the result with
/// [`loopnest_string_free`].
///
/// # Safety
/// `layer` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn loopnest_emit_c(
    layer: *const LoopnestLayer,
    perm_lex: u32,
    threads: u32,
    validation: bool,
    out: *mut *mut c_char,
) -> LoopnestStatus {
    guard(|| {
        if layer.is_null() {
            return Err(null("layer"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let params = layer_of(&*layer)?;
        let perm = permindex::perm_from_lex(perm_lex as usize).map_err(lift)?;
        let opts = CodegenOptions {
            threads: threads as usize,
            emit_validation: validation,
            ..CodegenOptions::default()
        };
        let src = codegen::emit_c(&params, perm, &opts).map_err(lift)?;
        *out = into_c_string(src)?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn loopnest_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Null-terminated; static storage.
#[no_mangle]
pub extern "C" fn loopnest_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
