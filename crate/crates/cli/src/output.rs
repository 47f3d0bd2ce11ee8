//! CSV and JSON artifacts.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so the
//! files are locale-independent and identical across reruns. Missing values
//! are empty cells.

use anyhow::{Context, Result};
use serde::Serialize;
use slblr::compare::Comparison;
use slblr::engine::{EngineConfig, RunTrace, Termination};
use slblr::repair::{RepairReport, RepairStatus};
use std::path::Path;

pub const TRACE_HEADER: [&str; 8] = [
    "k",
    "stepsize",
    "L",
    "dual_value_if_exact",
    "grad_norm",
    "level_in_force",
    "detector_fired",
    "lambda_distance_to_reference_if_known",
];

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))
}

pub fn write_trace(path: &Path, trace: &RunTrace, reference: Option<&[f64]>) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(TRACE_HEADER)?;
    for r in &trace.records {
        w.write_record([
            r.k.to_string(),
            cell(r.step),
            r.value.to_string(),
            cell(r.exact_dual),
            r.grad_norm().to_string(),
            cell(r.level),
            u8::from(r.detector_fired).to_string(),
            cell(reference.map(|l| r.distance_to(l))),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per level event.
pub fn write_levels(path: &Path, trace: &RunTrace) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "j",
        "k",
        "level",
        "window_start",
        "window_len",
        "degenerate",
    ])?;
    for e in &trace.level_events {
        w.write_record([
            e.j.to_string(),
            e.k.to_string(),
            e.level.to_string(),
            e.window_start.to_string(),
            e.window_len.to_string(),
            u8::from(e.degenerate).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows where some run has an exact dual value: `k`, one exact column per
/// run, then a level column for every run flagged in `with_level`.
pub fn write_comparison(path: &Path, c: &Comparison, with_level: &[bool]) -> Result<()> {
    let mut header = vec!["k".to_string()];
    header.extend(c.labels.iter().cloned());
    for (label, &lv) in c.labels.iter().zip(with_level) {
        if lv {
            header.push(format!("{label}_level"));
        }
    }
    let mut w = writer(path)?;
    w.write_record(&header)?;
    for row in c.aligned_rows() {
        let mut rec = vec![row.k.to_string()];
        rec.extend(row.exact.iter().map(|&v| cell(v)));
        for (level, &lv) in row.level.iter().zip(with_level) {
            if lv {
                rec.push(cell(*level));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// How the final relaxed solution was made feasible.
#[derive(Debug, Serialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum RepairSummary {
    /// Assignment repair for GAP instances.
    Assignment(RepairReport),
    /// Covering repair for the small integer program.
    Covering {
        status: RepairStatus,
        solution: Vec<i64>,
        feasible_cost: f64,
        lower_bound: Option<f64>,
        gap_percent: Option<f64>,
    },
}

impl RepairSummary {
    pub fn failed(&self) -> bool {
        match self {
            RepairSummary::Assignment(r) => r.status == RepairStatus::Failed,
            RepairSummary::Covering { status, .. } => *status == RepairStatus::Failed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub instance: &'a str,
    pub origin: String,
    pub policy: &'static str,
    pub config: &'a EngineConfig,
    pub termination: Termination,
    pub iterations: usize,
    pub subproblem_solves: usize,
    pub level_events: usize,
    pub detector_firings: usize,
    pub best_value: f64,
    pub certified_lb: Option<f64>,
    pub final_multipliers: &'a [f64],
    pub reference_distance: Option<f64>,
    pub repair: RepairSummary,
    /// Wall time of every repeated run.
    pub run_wall_secs: Vec<f64>,
    pub total_wall_secs: f64,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
