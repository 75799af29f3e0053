//! Plot-ready CSV files, one per figure family.

use std::io::Write;

use crate::cache::IpcPoint;
use crate::error::{Error, Result};
use crate::explorer::SweepResult;

use super::ranking::{Combo, SpeedupTable};
use super::reuse::ReusePoint;
use super::stability::StabilityExport;

pub const SIGNATURE_FILE: &str = "f4_2_signature.csv";
pub const RANKING_FILE: &str = "f4_7_ranking.csv";
pub const STABILITY_FILE: &str = "f5_1_parallel_coords.csv";
pub const PAIRS_FILE: &str = "f5_3_pairs.csv";
pub const SORTED_FILE: &str = "f5_4_sorted.csv";
pub const REUSE_FILE: &str = "f3_3_reuse.csv";
pub const IPC_FILE: &str = "f6_5_ipc.csv";
pub const PLOT_SCRIPT_FILE: &str = "plot.py";

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|e| Error::io("<csv output>", e))
}

fn f(x: f64) -> String {
    format!("{x:.6}")
}

/// Metric of every loop order on one case, ordered by hamiltonian index.
pub fn write_signature<W: Write>(rows: &[SweepResult], out: W) -> Result<()> {
    let mut rows: Vec<&SweepResult> = rows.iter().collect();
    rows.sort_by_key(|r| r.perm_ham);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["perm_ham", "perm_lex", "order", "cycles", "l1_misses", "l2_misses"])?;
    for r in rows {
        w.write_record([
            r.perm_ham.to_string(),
            r.perm_lex.to_string(),
            r.order.clone(),
            r.cycles.to_string(),
            r.l1_misses.to_string(),
            r.l2_misses.to_string(),
        ])?;
    }
    finish(w)
}

/// Ranked loop orders with one speedup column per case.
pub fn write_ranking<W: Write>(table: &SpeedupTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["rank", "perm_lex", "perm_ham", "order", "mean", "min"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(table.cases.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    for (rank, r) in table.ranked.iter().enumerate() {
        let mut rec = vec![
            (rank + 1).to_string(),
            r.perm_lex.to_string(),
            r.perm_ham.to_string(),
            r.order.clone(),
            f(r.mean),
            f(r.min),
        ];
        rec.extend(table.speedups_of(r.perm_lex).iter().map(|&s| f(s)));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn write_stability<W: Write>(ex: &StabilityExport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = vec!["perm_ham".into(), "perm_lex".into(), "color".into()];
    header.extend(ex.groups.iter().cloned());
    w.write_record(&header)?;
    let mut rows: Vec<_> = ex.rows.iter().collect();
    rows.sort_by_key(|r| r.perm_ham);
    for r in rows {
        let mut rec = vec![r.perm_ham.to_string(), r.perm_lex.to_string(), f(r.color)];
        rec.extend(r.means.iter().map(|&m| f(m)));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn write_combos<W: Write>(combos: &[Combo], limit: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "members_lex", "mean", "min"])?;
    for (rank, c) in combos.iter().take(limit).enumerate() {
        let members = c.members.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("+");
        w.write_record([(rank + 1).to_string(), members, f(c.mean), f(c.min)])?;
    }
    finish(w)
}

/// Each case's speedups sorted descending, one column per case.
pub fn write_sorted_curves<W: Write>(table: &SpeedupTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["position".to_string()];
    header.extend(table.cases.iter().map(|c| c.to_string()));
    w.write_record(&header)?;
    let columns: Vec<Vec<f64>> = (0..table.cases.len())
        .map(|c| {
            let mut col: Vec<f64> = table.speedup.iter().map(|row| row[c]).collect();
            col.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
            col
        })
        .collect();
    for pos in 0..table.perms.len() {
        let mut rec = vec![pos.to_string()];
        rec.extend(columns.iter().map(|col| f(col[pos])));
        w.write_record(&rec)?;
    }
    finish(w)
}

pub fn write_reuse<W: Write>(points: &[ReusePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    finish(w)
}

pub fn write_ipc<W: Write>(series: &[IpcPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["window_end", "recent_ipc"])?;
    for p in series {
        w.write_record([p.window_end.to_string(), f(p.recent_ipc)])?;
    }
    finish(w)
}

/// Matplotlib script plotting whichever of the CSV files sit next to it.
pub const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__))


def rows(name):
    path = os.path.join(here, name)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return list(csv.DictReader(f))


def save(fig, name):
    fig.tight_layout()
    fig.savefig(os.path.join(here, name), dpi=150)
    plt.close(fig)


sig = rows("f4_2_signature.csv")
if sig:
    fig, ax = plt.subplots(2, 1, figsize=(10, 6), sharex=True)
    x = [int(r["perm_ham"]) for r in sig]
    ax[0].plot(x, [int(r["cycles"]) for r in sig], lw=0.8)
    ax[0].set_ylabel("cycles")
    ax[1].plot(x, [int(r["l2_misses"]) for r in sig], lw=0.8, color="tab:red")
    ax[1].set_ylabel("L2 misses")
    ax[1].set_xlabel("hamiltonian index")
    save(fig, "f4_2_signature.png")

rank = rows("f4_7_ranking.csv")
if rank:
    fixed = {"rank", "perm_lex", "perm_ham", "order", "mean", "min"}
    cases = [k for k in rank[0] if k not in fixed]
    fig, ax = plt.subplots(figsize=(10, 5))
    for case in cases:
        ax.scatter(range(len(rank)), [float(r[case]) for r in rank], s=1, alpha=0.3)
    ax.plot(range(len(rank)), [float(r["mean"]) for r in rank], color="black", lw=1)
    ax.set_xlabel("loop order, ranked by mean speedup")
    ax.set_ylabel("speedup")
    save(fig, "f4_7_ranking.png")

par = rows("f5_1_parallel_coords.csv")
if par:
    groups = [k for k in par[0] if k not in {"perm_ham", "perm_lex", "color"}]
    fig, ax = plt.subplots(figsize=(8, 6))
    cmap = plt.get_cmap("viridis")
    for r in par:
        ax.plot(range(len(groups)), [float(r[g]) for g in groups], color=cmap(float(r["color"])), lw=0.4, alpha=0.6)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels(groups)
    ax.set_ylabel("mean speedup")
    save(fig, "f5_1_parallel_coords.png")

pairs = rows("f5_3_pairs.csv")
if pairs:
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot([float(r["mean"]) for r in pairs], label="mean")
    ax.plot([float(r["min"]) for r in pairs], label="min")
    ax.set_xlabel("pair rank")
    ax.legend()
    save(fig, "f5_3_pairs.png")

curves = rows("f5_4_sorted.csv")
if curves:
    cases = [k for k in curves[0] if k != "position"]
    fig, ax = plt.subplots(figsize=(8, 5))
    for case in cases:
        ax.plot([float(r[case]) for r in curves], lw=0.6)
    ax.set_xlabel("loop orders, sorted")
    ax.set_ylabel("speedup")
    save(fig, "f5_4_sorted.png")

reuse = rows("f3_3_reuse.csv")
if reuse:
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.scatter([int(r["seq"]) for r in reuse], [int(r["block_rank"]) for r in reuse], s=0.2)
    ax.set_xlabel("access")
    ax.set_ylabel("block, by first touch")
    save(fig, "f3_3_reuse.png")

ipc = rows("f6_5_ipc.csv")
if ipc:
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot([int(r["window_end"]) for r in ipc], [float(r["recent_ipc"]) for r in ipc])
    ax.set_xlabel("instructions")
    ax.set_ylabel("recent IPC")
    save(fig, "f6_5_ipc.png")
"#;
