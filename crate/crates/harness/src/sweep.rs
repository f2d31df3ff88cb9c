//! Grid sweeps: algorithms × compressors × seeds.

use std::path::Path;

use cafe_core::{Algorithm, ProblemSuite};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, GridPoint, RunVariant, SweepSpec};
use crate::error::HarnessError;
use crate::experiment::{build_suite, execute, sanitize, RunOutcome};
use crate::output::{ensure_dir, fmt_f64, summarize, write_json, write_rows, write_trace_csv, RunSummary};

pub const WIDE_FILE: &str = "sweep_cells.csv";
pub const AGGREGATE_FILE: &str = "sweep_aggregate.csv";
pub const TRACE_DIR: &str = "traces";

/// One (grid point, algorithm, seed) cell. Failed cells keep their error
/// text instead of aborting the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct CellResult {
    pub grid_index: usize,
    pub algorithm: Algorithm,
    pub family: String,
    pub parameter: String,
    pub compressor: String,
    pub seed: u64,
    pub summary: Option<RunSummary>,
    pub rounds_to_threshold: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stat {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { n, mean, std })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub algorithm: Algorithm,
    pub family: String,
    pub parameter: String,
    pub compressor: String,
    pub cells: usize,
    pub diverged: usize,
    pub failed: usize,
    pub final_f: Option<Stat>,
    pub final_grad_norm_sq: Option<Stat>,
    pub rounds_to_threshold: Option<Stat>,
    pub uplink_bytes: Option<Stat>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

struct Cell<'a> {
    index: usize,
    point: &'a GridPoint,
    algorithm: Algorithm,
    seed: u64,
}

/// Cell names carry the grid index: two fractions can round to the same `k`.
fn cell_variant(sweep: &SweepSpec, index: usize, point: &GridPoint, algorithm: Algorithm) -> RunVariant {
    RunVariant {
        name: format!(
            "{}__g{index:02}__{}",
            algorithm.name(),
            sanitize(&point.compressor.label())
        ),
        algorithm,
        compressor: point.compressor.clone(),
        step: sweep.step.clone(),
        rounds: sweep.rounds,
        local_steps: 1,
        stateful_clients: true,
        wire_rounding: false,
        parallel_clients: false,
    }
}

fn rounds_to(outcome: &RunOutcome, threshold: f64) -> Option<usize> {
    let start = outcome.trace.records.first()?.grad_norm_sq;
    outcome.trace.rounds_to(threshold * start)
}

/// Runs the grid and writes per-cell traces plus the wide and aggregate
/// CSVs under `out`. Uses the current rayon pool for cells.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<SweepSummary, HarnessError> {
    let sweep = cfg.sweep.as_ref().ok_or_else(|| HarnessError::Config {
        field: "sweep".into(),
        message: "the config has no [sweep] table".into(),
    })?;
    let d = cfg.suite.dim();
    let grid = sweep.grid(d);
    let rounds = sweep.rounds.unwrap_or(cfg.rounds);
    let config_toml = cfg.to_toml();
    let trace_dir = out.join(TRACE_DIR);
    ensure_dir(&trace_dir)?;

    let suites: Vec<Result<ProblemSuite, String>> = cfg
        .seeds
        .par_iter()
        .map(|&s| build_suite(&cfg.suite, s).map_err(|e| e.to_string()))
        .collect();

    let mut cells = Vec::new();
    for (index, point) in grid.iter().enumerate() {
        for &algorithm in &sweep.algorithms {
            for &seed in &cfg.seeds {
                cells.push(Cell {
                    index,
                    point,
                    algorithm,
                    seed,
                });
            }
        }
    }

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|cell| {
            let si = cfg
                .seeds
                .iter()
                .position(|&s| s == cell.seed)
                .expect("cell seeds come from the config");
            let variant = cell_variant(sweep, cell.index, cell.point, cell.algorithm);
            let mut result = CellResult {
                grid_index: cell.index,
                algorithm: cell.algorithm,
                family: cell.point.family.clone(),
                parameter: cell.point.parameter.clone(),
                compressor: cell.point.compressor.label(),
                seed: cell.seed,
                summary: None,
                rounds_to_threshold: None,
                error: None,
            };
            let outcome = suites[si]
                .as_ref()
                .map_err(|e| e.clone())
                .and_then(|suite| execute(suite, &variant, rounds, cell.seed).map_err(|e| e.to_string()));
            match outcome {
                Ok(outcome) => {
                    let trace_name = format!("{}.csv", outcome.id);
                    let written = write_trace_csv(&trace_dir.join(&trace_name), &outcome.trace).and_then(|_| {
                        let summary = summarize(&outcome, &trace_name, &config_toml);
                        write_json(&trace_dir.join(format!("{}.summary.json", outcome.id)), &summary)?;
                        Ok(summary)
                    });
                    match written {
                        Ok(summary) => {
                            result.rounds_to_threshold = rounds_to(&outcome, sweep.threshold);
                            result.summary = Some(summary);
                        }
                        Err(e) => result.error = Some(e.to_string()),
                    }
                }
                Err(e) => result.error = Some(e),
            }
            result
        })
        .collect();

    let aggregates = aggregate(&grid, &sweep.algorithms, &results);
    write_wide(&out.join(WIDE_FILE), &results)?;
    write_aggregate(&out.join(AGGREGATE_FILE), &aggregates)?;
    let summary = SweepSummary {
        cells: results,
        aggregates,
    };
    write_json(&out.join("sweep_summary.json"), &summary)?;
    Ok(summary)
}

fn aggregate(grid: &[GridPoint], algorithms: &[Algorithm], cells: &[CellResult]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for (index, point) in grid.iter().enumerate() {
        for &algorithm in algorithms {
            let label = point.compressor.label();
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.algorithm == algorithm && c.grid_index == index)
                .collect();
            let ok: Vec<&RunSummary> = group
                .iter()
                .filter_map(|c| c.summary.as_ref())
                .filter(|s| !s.diverged)
                .collect();
            let collect = |f: &dyn Fn(&RunSummary) -> f64| ok.iter().map(|s| f(s)).collect::<Vec<f64>>();
            let reached: Vec<f64> = group
                .iter()
                .filter(|c| c.summary.as_ref().is_some_and(|s| !s.diverged))
                .filter_map(|c| c.rounds_to_threshold.map(|r| r as f64))
                .collect();
            out.push(Aggregate {
                algorithm,
                family: point.family.clone(),
                parameter: point.parameter.clone(),
                compressor: label,
                cells: group.len(),
                diverged: group
                    .iter()
                    .filter(|c| c.summary.as_ref().is_some_and(|s| s.diverged))
                    .count(),
                failed: group.iter().filter(|c| c.error.is_some()).count(),
                final_f: Stat::of(&collect(&|s| s.final_f_value)),
                final_grad_norm_sq: Stat::of(&collect(&|s| s.final_grad_norm_sq)),
                rounds_to_threshold: Stat::of(&reached),
                uplink_bytes: Stat::of(&collect(&|s| s.uplink_bytes_total as f64)),
            });
        }
    }
    out
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_wide(path: &Path, cells: &[CellResult]) -> Result<(), HarnessError> {
    let header = [
        "algorithm",
        "family",
        "parameter",
        "compressor",
        "seed",
        "gamma",
        "status",
        "final_f",
        "final_grad_norm_sq",
        "rounds_to_threshold",
        "uplink_bytes",
        "downlink_bytes",
        "bound_applicable",
        "bound_value",
        "bound_satisfied",
        "error",
    ];
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            let s = c.summary.as_ref();
            let bound = s.and_then(|s| s.bound.as_ref());
            let status = match (s, &c.error) {
                (_, Some(_)) => "failed",
                (Some(s), None) if s.diverged => "diverged",
                _ => "completed",
            };
            vec![
                c.algorithm.name().to_string(),
                c.family.clone(),
                c.parameter.clone(),
                c.compressor.clone(),
                c.seed.to_string(),
                opt(s.map(|s| fmt_f64(s.gamma))),
                status.to_string(),
                opt(s.map(|s| fmt_f64(s.final_f_value))),
                opt(s.map(|s| fmt_f64(s.final_grad_norm_sq))),
                opt(c.rounds_to_threshold),
                opt(s.map(|s| s.uplink_bytes_total)),
                opt(s.map(|s| s.downlink_bytes_total)),
                opt(bound.map(|b| b.applicable)),
                opt(bound.and_then(|b| b.bound_value).map(fmt_f64)),
                opt(bound.filter(|b| b.applicable).map(|b| b.satisfied)),
                c.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_rows(path, &header, &rows)
}

fn write_aggregate(path: &Path, aggs: &[Aggregate]) -> Result<(), HarnessError> {
    let header = [
        "algorithm",
        "family",
        "parameter",
        "compressor",
        "cells",
        "diverged",
        "failed",
        "final_f_mean",
        "final_f_std",
        "final_grad_norm_sq_mean",
        "final_grad_norm_sq_std",
        "rounds_to_threshold_mean",
        "rounds_to_threshold_std",
        "reached_threshold",
        "uplink_bytes_mean",
    ];
    let stat = |s: &Option<Stat>| -> [String; 2] {
        match s {
            Some(s) => [fmt_f64(s.mean), fmt_f64(s.std)],
            None => [String::new(), String::new()],
        }
    };
    let rows: Vec<Vec<String>> = aggs
        .iter()
        .map(|a| {
            let [fm, fs] = stat(&a.final_f);
            let [gm, gs] = stat(&a.final_grad_norm_sq);
            let [rm, rs] = stat(&a.rounds_to_threshold);
            vec![
                a.algorithm.name().to_string(),
                a.family.clone(),
                a.parameter.clone(),
                a.compressor.clone(),
                a.cells.to_string(),
                a.diverged.to_string(),
                a.failed.to_string(),
                fm,
                fs,
                gm,
                gs,
                rm,
                rs,
                a.rounds_to_threshold.as_ref().map_or(0, |s| s.n).to_string(),
                opt(a.uplink_bytes.as_ref().map(|s| fmt_f64(s.mean))),
            ]
        })
        .collect();
    write_rows(path, &header, &rows)
}
