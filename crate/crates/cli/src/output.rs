//! Deterministic run outputs: CSV tables, a replayable manifest, and
//! a static plotting script. Same configuration and seed, same bytes.

use std::path::{Path, PathBuf};
use std::process::Command;

use solist_core::coupling::LoggedEvent;
use solist_core::RequestDistribution;

use crate::config::RunConfig;
use crate::error::Result;
use crate::experiments::{CaepReport, CoupleReport, RatioReport, TailBound, TailEstimate};

/// Floats are written with enough digits to round-trip exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `cost_tail.csv`: one row per grid point with its diagnostics.
pub fn write_cost_tail(
    dir: &Path,
    rows: &[TailEstimate],
    dist: &RequestDistribution,
) -> Result<PathBuf> {
    let path = dir.join("cost_tail.csv");
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.x.to_string(),
                fmt_float(r.value),
                fmt_float(r.half_width),
                r.method.to_string(),
                r.sample_count.to_string(),
                r.hits.to_string(),
                r.reliable.to_string(),
                r.stationary_ok.to_string(),
                fmt_float(dist.tail(r.x)),
            ]
        })
        .collect();
    write_rows(
        &path,
        &[
            "x",
            "cost_tail",
            "half_width",
            "method",
            "sample_count",
            "hits",
            "reliable",
            "stationary_ok",
            "request_tail",
        ],
        &records,
    )?;
    Ok(path)
}

/// `ratio.csv`: the exponent comparison, excluded rows kept with their
/// reasons and an empty ratio field.
pub fn write_ratio(dir: &Path, report: &RatioReport) -> Result<PathBuf> {
    let path = dir.join("ratio.csv");
    let records: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.x.to_string(),
                fmt_float(r.cost.value),
                fmt_float(r.cost.half_width),
                r.cost.method.to_string(),
                fmt_float(r.request_tail),
                r.ratio.map(fmt_float).unwrap_or_default(),
                fmt_float(r.ratio_half_width),
                r.cost_dominates.to_string(),
                r.excluded.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_rows(
        &path,
        &[
            "x",
            "cost_tail",
            "half_width",
            "method",
            "request_tail",
            "ratio",
            "ratio_half_width",
            "cost_dominates",
            "excluded",
        ],
        &records,
    )?;
    Ok(path)
}

/// `caep.csv`: occupancy law, simulated versus closed form.
pub fn write_caep(dir: &Path, report: &CaepReport) -> Result<PathBuf> {
    let path = dir.join("caep.csv");
    let records: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.kappa.to_string(),
                fmt_float(r.empirical),
                fmt_float(r.std_err),
                fmt_float(r.expected),
            ]
        })
        .collect();
    write_rows(&path, &["kappa", "empirical", "std_err", "expected"], &records)?;
    Ok(path)
}

/// `couple.csv` plus `couple_rates.csv`, and `events.csv` when the
/// report carries an event log.
pub fn write_couple(dir: &Path, report: &CoupleReport) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let path = dir.join("couple.csv");
    let records: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.x.to_string(),
                fmt_float(r.empirical),
                fmt_float(r.std_err),
                fmt_float(r.bound),
            ]
        })
        .collect();
    write_rows(&path, &["x", "empirical", "std_err", "bound"], &records)?;
    written.push(path);

    let path = dir.join("couple_rates.csv");
    let rates = &report.rates;
    let records = vec![
        vec![
            "left".to_string(),
            fmt_float(rates.left_mean),
            fmt_float(rates.left_se),
            fmt_float(rates.left_expected),
        ],
        vec![
            "right".to_string(),
            fmt_float(rates.right_mean),
            fmt_float(rates.right_se),
            fmt_float(rates.right_expected),
        ],
    ];
    write_rows(&path, &["side", "estimate", "std_err", "expected"], &records)?;
    written.push(path);

    if let Some(events) = &report.events {
        let path = dir.join("events.csv");
        write_events(&path, events)?;
        written.push(path);
    }
    Ok(written)
}

fn write_events(path: &Path, events: &[LoggedEvent]) -> Result<()> {
    let records: Vec<Vec<String>> = events
        .iter()
        .map(|e| {
            vec![
                e.tick.to_string(),
                fmt_float(e.time),
                e.item.to_string(),
                e.applied_to_original.to_string(),
                e.applied_to_modified.to_string(),
                e.phi.to_string(),
                e.max_x.to_string(),
                e.z_top.to_string(),
            ]
        })
        .collect();
    write_rows(
        path,
        &[
            "tick",
            "time",
            "item",
            "applied_to_original",
            "applied_to_modified",
            "phi",
            "max_x",
            "z_top",
        ],
        &records,
    )
}

/// `bound.csv`: the union bound split into its three terms.
pub fn write_bound(dir: &Path, rows: &[TailBound]) -> Result<PathBuf> {
    let path = dir.join("bound.csv");
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.x.to_string(),
                r.y.to_string(),
                fmt_float(r.front_block),
                fmt_float(r.ladder),
                fmt_float(r.remainder),
                fmt_float(r.total()),
                fmt_float(r.request_tail),
            ]
        })
        .collect();
    write_rows(
        &path,
        &[
            "x",
            "y",
            "front_block",
            "ladder",
            "remainder",
            "bound",
            "request_tail",
        ],
        &records,
    )?;
    Ok(path)
}

/// `manifest.txt`: every configuration key as `key = value`, replayable
/// with `--config manifest.txt`, plus comment lines identifying the
/// subcommand and source revision.
pub fn write_manifest(dir: &Path, cfg: &RunConfig, subcommand: &str) -> Result<PathBuf> {
    let path = dir.join("manifest.txt");
    let mut text = String::new();
    text.push_str(&format!(
        "# solist {subcommand} --config manifest.txt replays this run\n"
    ));
    text.push_str(&format!("# git = {}\n", git_revision()));
    for (key, value) in cfg.assignments() {
        text.push_str(&format!("{key} = {value}\n"));
    }
    std::fs::write(&path, text)?;
    Ok(path)
}

fn git_revision() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// `plot.py`: a fixed matplotlib script that renders whichever CSV
/// tables sit next to it.
pub fn write_plot_script(dir: &Path) -> Result<PathBuf> {
    let path = dir.join("plot.py");
    std::fs::write(&path, PLOT_SCRIPT)?;
    Ok(path)
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Render the tail curves emitted alongside this script."""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))

CURVES = [
    ("cost_tail.csv", "x", [("cost_tail", "Pr[C > x]"), ("request_tail", "Pr[R > x]")]),
    ("ratio.csv", "x", [("cost_tail", "Pr[C > x]"), ("request_tail", "Pr[R > x]")]),
    ("bound.csv", "x", [("bound", "union bound"), ("request_tail", "Pr[R > x]")]),
    ("couple.csv", "x", [("empirical", "Pr[max X > x]"), ("bound", "overhang bound")]),
    ("caep.csv", "kappa", [("empirical", "occupancy"), ("expected", "closed form")]),
]


def load(name):
    path = os.path.join(HERE, name)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return list(csv.DictReader(fh))


plotted = False
plt.figure(figsize=(7, 5))
for fname, xcol, cols in CURVES:
    rows = load(fname)
    if not rows:
        continue
    for col, label in cols:
        if col not in rows[0]:
            continue
        pts = [
            (float(r[xcol]), float(r[col]))
            for r in rows
            if r[col] not in ("", "nan") and float(r[col]) > 0.0
        ]
        if not pts:
            continue
        plt.semilogy(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            label="%s: %s" % (fname[:-4], label),
        )
        plotted = True

if plotted:
    plt.xlabel("x")
    plt.ylabel("tail probability")
    plt.grid(True, which="both", alpha=0.3)
    plt.legend()
    plt.tight_layout()
    out = os.path.join(HERE, "tails.png")
    plt.savefig(out, dpi=150)
    print("wrote", out)
else:
    print("no curves found")
"#;
