//! Trace CSVs and summary sidecars.
//!
//! Floats are written in Rust's shortest round-trip exponent form, so files
//! are byte-identical whenever the numbers are.

use std::fs;
use std::path::{Path, PathBuf};

use cafe_core::theory::{check_bound_on_trace, OmegaSource};
use cafe_core::{BoundReport, CompressorSpec, RunStatus, RunTrace, TheoremInputs, TheoryError};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::experiment::{scheme_for, RunOutcome, SuiteConstants};

pub const TRACE_HEADER: [&str; 6] = [
    "k",
    "grad_norm_sq",
    "f_value",
    "compression_error_norm_sq",
    "uplink_bytes",
    "downlink_bytes",
];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:e}")
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), HarnessError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// One row per recorded round. Byte columns are running totals.
pub fn write_trace_csv(path: &Path, trace: &RunTrace) -> Result<(), HarnessError> {
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                fmt_f64(r.grad_norm_sq),
                fmt_f64(r.f_value),
                fmt_f64(r.error_norm_sq),
                r.uplink_bytes_total.to_string(),
                r.downlink_bytes_total.to_string(),
            ]
        })
        .collect();
    write_rows(path, &TRACE_HEADER, &rows)
}

/// One parsed row of a trace CSV.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub grad_norm_sq: f64,
    pub f_value: f64,
    pub compression_error_norm_sq: f64,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

/// Sidecar written next to every trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub variant: String,
    pub algorithm: String,
    pub compressor: CompressorSpec,
    pub compressor_label: String,
    pub seed: u64,
    pub gamma: f64,
    pub rounds: usize,
    pub local_steps: usize,
    pub stateful_clients: bool,
    pub status: RunStatus,
    pub diverged: bool,
    pub final_f_value: f64,
    pub final_grad_norm_sq: f64,
    pub uplink_bytes_total: u64,
    pub downlink_bytes_total: u64,
    pub omega: f64,
    pub omega_source: OmegaSource,
    pub constants: SuiteConstants,
    /// Bound check for the scheme matching the algorithm; `None` when it
    /// cannot be evaluated (diverged run, local steps, single-client reference).
    pub bound: Option<BoundReport<f64>>,
    pub bound_note: Option<String>,
    pub trace_file: String,
    /// The full experiment config the run came from, as TOML.
    pub config: String,
}

pub fn theorem_inputs(outcome: &RunOutcome) -> Option<TheoremInputs> {
    let first = outcome.trace.records.first()?;
    Some(TheoremInputs {
        f0: (first.f_value - outcome.constants.f_star).max(0.0),
        l: outcome.constants.l,
        b2: outcome.constants.b2.max(1.0),
        omega: outcome.prepared.omega,
        gamma: outcome.prepared.config.gamma,
        k: outcome.trace.records.len(),
    })
}

fn bound_for(outcome: &RunOutcome) -> (Option<BoundReport<f64>>, Option<String>) {
    let Some(scheme) = scheme_for(outcome.trace.config.algorithm) else {
        return (None, Some("no bound for this algorithm".into()));
    };
    let Some(inputs) = theorem_inputs(outcome) else {
        return (None, Some("empty trace".into()));
    };
    match check_bound_on_trace(&outcome.trace, &inputs, scheme) {
        Ok(r) => (Some(r), None),
        Err(TheoryError::InvalidInputs(m)) => (None, Some(m)),
        Err(e) => (None, Some(e.to_string())),
    }
}

pub fn summarize(outcome: &RunOutcome, trace_file: &str, config_toml: &str) -> RunSummary {
    let t = &outcome.trace;
    let (bound, bound_note) = bound_for(outcome);
    let last = t.records.last();
    RunSummary {
        run_id: outcome.id.clone(),
        variant: outcome.variant.name.clone(),
        algorithm: t.config.algorithm.name().to_string(),
        compressor: t.config.compressor.clone(),
        compressor_label: t.config.compressor.label(),
        seed: outcome.seed,
        gamma: t.config.gamma,
        rounds: t.config.rounds,
        local_steps: t.config.local_steps,
        stateful_clients: t.config.stateful_clients,
        status: t.status.clone(),
        diverged: t.diverged(),
        final_f_value: t.final_f_value,
        final_grad_norm_sq: t.final_grad_norm_sq,
        uplink_bytes_total: last.map_or(0, |r| r.uplink_bytes_total),
        downlink_bytes_total: last.map_or(0, |r| r.downlink_bytes_total),
        omega: outcome.prepared.omega,
        omega_source: outcome.prepared.omega_source,
        constants: outcome.constants,
        bound,
        bound_note,
        trace_file: trace_file.to_string(),
        config: config_toml.to_string(),
    }
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<RunSummary, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes `<dir>/<id>.csv` and `<dir>/<id>.summary.json`; returns both paths.
pub fn write_run(dir: &Path, outcome: &RunOutcome, config_toml: &str) -> Result<(PathBuf, PathBuf), HarnessError> {
    ensure_dir(dir)?;
    let trace_name = format!("{}.csv", outcome.id);
    let trace_path = dir.join(&trace_name);
    write_trace_csv(&trace_path, &outcome.trace)?;
    let summary_path = dir.join(format!("{}.summary.json", outcome.id));
    write_json(&summary_path, &summarize(outcome, &trace_name, config_toml))?;
    Ok((trace_path, summary_path))
}
