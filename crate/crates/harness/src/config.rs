//! Experiment configuration files.
//!
//! A config is a TOML document:
//!
//! ```toml
//! schema_version = 1
//! seeds = [1, 2, 3]
//! rounds = 500
//!
//! [suite]
//! kind = "quadratic"
//! n_clients = 10
//! dim = 400
//!
//! [[runs]]
//! name = "cafe-topk"
//! algorithm = "cafe"
//! compressor = { kind = "top_k", k = 40 }
//! step = { rule = "inverse_l", scale = 1.0 }
//!
//! [sweep]
//! algorithms = ["dcgd", "cafe"]
//! top_k_fractions = [0.1, 0.01, 0.001]
//! ```
//!
//! Unknown keys are rejected so that a misspelled field is reported rather
//! than silently ignored.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use cafe_core::objectives::{LogisticParams, QuadraticParams};
use cafe_core::{Algorithm, CompressorSpec};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteFamily {
    Quadratic,
    Logistic,
}

/// Problem family and its generator parameters. Fields that do not apply to
/// the chosen family are ignored; missing ones take the family defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSpec {
    pub kind: SuiteFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_clients: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_client: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_skew: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Points used for the sampled B² of logistic suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2_samples: Option<usize>,
}

pub const DEFAULT_B2_SAMPLES: usize = 1000;

impl SuiteSpec {
    pub fn quadratic_params(&self, seed: u64) -> QuadraticParams {
        let d = QuadraticParams::default();
        QuadraticParams {
            seed,
            n_clients: self.n_clients.unwrap_or(d.n_clients),
            dim: self.dim.unwrap_or(d.dim),
            kappa: self.kappa.unwrap_or(d.kappa),
            heterogeneity: self.heterogeneity.unwrap_or(d.heterogeneity),
        }
    }

    pub fn logistic_params(&self, seed: u64) -> LogisticParams {
        let d = LogisticParams::default();
        LogisticParams {
            seed,
            n_clients: self.n_clients.unwrap_or(d.n_clients),
            dim: self.dim.unwrap_or(d.dim),
            samples_per_client: self.samples_per_client.unwrap_or(d.samples_per_client),
            label_skew: self.label_skew.unwrap_or(d.label_skew),
            lambda: self.lambda.unwrap_or(d.lambda),
        }
    }

    pub fn dim(&self) -> usize {
        match self.kind {
            SuiteFamily::Quadratic => self.quadratic_params(0).dim,
            SuiteFamily::Logistic => self.logistic_params(0).dim,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_min_exp() -> i32 {
    -10
}

fn default_max_exp() -> i32 {
    6
}

/// How a run's step size is chosen once the suite constants are known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    Absolute {
        value: f64,
    },
    /// `scale / L`.
    InverseL {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `scale · (1 − ω) / (L (1 + ω))`.
    CafeMax {
        #[serde(default = "one")]
        scale: f64,
    },
    /// Largest `2^j / L`, `j` from `max_exp` down to `min_exp`, whose run
    /// neither diverges nor ends above its starting value.
    Search {
        #[serde(default = "default_min_exp")]
        min_exp: i32,
        #[serde(default = "default_max_exp")]
        max_exp: i32,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        Self::InverseL { scale: 1.0 }
    }
}

fn default_local_steps() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn is_one(n: &usize) -> bool {
    *n == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunVariant {
    pub name: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub compressor: CompressorSpec,
    #[serde(default)]
    pub step: StepRule,
    /// Overrides the top-level `rounds`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default = "default_local_steps", skip_serializing_if = "is_one")]
    pub local_steps: usize,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub stateful_clients: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub wire_rounding: bool,
    /// Evaluate clients in parallel inside the run. Results are unchanged.
    #[serde(default, skip_serializing_if = "is_false")]
    pub parallel_clients: bool,
}

fn default_threshold() -> f64 {
    1e-3
}

/// The grid is the union of the explicit `compressors` list and the
/// shorthand families, in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub algorithms: Vec<Algorithm>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub compressors: Vec<CompressorSpec>,
    /// Top-k with `k = max(1, round(fraction · d))`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_k_fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub svd_ranks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quant_bits: Vec<u8>,
    #[serde(default)]
    pub step: StepRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    /// Rounds-to-threshold target, relative to `‖∇f(x⁰)‖²`.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

/// One grid point of a sweep: the compressor and the parameter it varies.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub compressor: CompressorSpec,
    pub family: String,
    pub parameter: String,
}

impl SweepSpec {
    pub fn grid(&self, d: usize) -> Vec<GridPoint> {
        let mut out: Vec<GridPoint> = self
            .compressors
            .iter()
            .map(|c| GridPoint {
                compressor: c.clone(),
                family: family_name(c).to_string(),
                parameter: c.label(),
            })
            .collect();
        for &f in &self.top_k_fractions {
            let k = ((f * d as f64).round() as usize).clamp(1, d.max(1));
            out.push(GridPoint {
                compressor: CompressorSpec::top_k(k),
                family: "top_k".into(),
                parameter: format!("{f}"),
            });
        }
        for &r in &self.svd_ranks {
            out.push(GridPoint {
                compressor: CompressorSpec::svd(r),
                family: "svd_low_rank".into(),
                parameter: r.to_string(),
            });
        }
        for &b in &self.quant_bits {
            out.push(GridPoint {
                compressor: CompressorSpec::quant(b),
                family: "uniform_quant".into(),
                parameter: b.to_string(),
            });
        }
        out
    }
}

fn family_name(c: &CompressorSpec) -> &'static str {
    match c {
        CompressorSpec::Identity => "identity",
        CompressorSpec::TopK { .. } => "top_k",
        CompressorSpec::UniformQuant { .. } => "uniform_quant",
        CompressorSpec::SvdLowRank { .. } => "svd_low_rank",
        CompressorSpec::Compose { .. } => "compose",
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_rounds() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// One repetition per seed; the seed drives both suite generation and
    /// the starting point.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    pub suite: SuiteSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        message: message.into(),
    }
}

fn check_step(field: &str, step: &StepRule) -> Result<(), HarnessError> {
    match *step {
        StepRule::Absolute { value } if !(value > 0.0 && value.is_finite()) => Err(invalid(
            format!("{field}.value"),
            "step size must be positive and finite",
        )),
        StepRule::InverseL { scale } | StepRule::CafeMax { scale } if !(scale > 0.0 && scale.is_finite()) => {
            Err(invalid(format!("{field}.scale"), "scale must be positive and finite"))
        }
        StepRule::Search { min_exp, max_exp } if min_exp > max_exp => {
            Err(invalid(format!("{field}.min_exp"), "min_exp must not exceed max_exp"))
        }
        _ => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Parse {
            path: None,
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Parse { message, .. } => HarnessError::Parse {
                path: Some(path.to_path_buf()),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs always serialize")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(invalid("seeds", "seeds must be distinct"));
        }
        if self.rounds == 0 {
            return Err(invalid("rounds", "must be at least 1"));
        }
        self.validate_suite()?;
        let d = self.suite.dim();
        let mut names = BTreeSet::new();
        for (i, run) in self.runs.iter().enumerate() {
            let field = |f: &str| format!("runs[{i}].{f}");
            if run.name.is_empty() || !names.insert(run.name.as_str()) {
                return Err(invalid(field("name"), "run names must be non-empty and unique"));
            }
            if run.rounds == Some(0) {
                return Err(invalid(field("rounds"), "must be at least 1"));
            }
            if run.local_steps == 0 {
                return Err(invalid(field("local_steps"), "must be at least 1"));
            }
            if run.algorithm == Algorithm::Ef21 && self.suite.n_clients.unwrap_or(10) != 1 {
                return Err(invalid(field("algorithm"), "ef21 runs need a single-client suite"));
            }
            run.compressor
                .validate(d)
                .map_err(|e| invalid(field("compressor"), e.to_string()))?;
            check_step(&field("step"), &run.step)?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.algorithms.is_empty() {
                return Err(invalid("sweep.algorithms", "at least one algorithm is required"));
            }
            if sweep.algorithms.contains(&Algorithm::Ef21) {
                return Err(invalid(
                    "sweep.algorithms",
                    "ef21 is a single-client reference, not a sweep target",
                ));
            }
            let grid = sweep.grid(d);
            if grid.is_empty() {
                return Err(invalid("sweep.compressors", "the compressor grid is empty"));
            }
            for (i, f) in sweep.top_k_fractions.iter().enumerate() {
                if !(*f > 0.0 && *f <= 1.0) {
                    return Err(invalid(
                        format!("sweep.top_k_fractions[{i}]"),
                        "fractions must lie in (0, 1]",
                    ));
                }
            }
            for (i, p) in grid.iter().enumerate() {
                p.compressor
                    .validate(d)
                    .map_err(|e| invalid(format!("sweep grid point {i} ({})", p.parameter), e.to_string()))?;
            }
            if sweep.rounds == Some(0) {
                return Err(invalid("sweep.rounds", "must be at least 1"));
            }
            if !(sweep.threshold > 0.0) {
                return Err(invalid("sweep.threshold", "must be positive"));
            }
            check_step("sweep.step", &sweep.step)?;
        }
        Ok(())
    }

    fn validate_suite(&self) -> Result<(), HarnessError> {
        let s = &self.suite;
        let positive = |name: &str, v: Option<usize>| match v {
            Some(0) => Err(invalid(format!("suite.{name}"), "must be at least 1")),
            _ => Ok(()),
        };
        positive("n_clients", s.n_clients)?;
        positive("dim", s.dim)?;
        positive("samples_per_client", s.samples_per_client)?;
        positive("b2_samples", s.b2_samples)?;
        if let Some(k) = s.kappa {
            if !(k >= 1.0 && k.is_finite()) {
                return Err(invalid("suite.kappa", "must be a finite value of at least 1"));
            }
        }
        if let Some(h) = s.heterogeneity {
            if !(h >= 0.0 && h.is_finite()) {
                return Err(invalid("suite.heterogeneity", "must be finite and non-negative"));
            }
        }
        if let Some(p) = s.label_skew {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid("suite.label_skew", "must lie in [0, 1]"));
            }
        }
        if let Some(l) = s.lambda {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid("suite.lambda", "must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn rounds_for(&self, run: &RunVariant) -> usize {
        run.rounds.unwrap_or(self.rounds)
    }
}
