//! Round loops for uncompressed GD, direct compression (DCGD) and compressed
//! aggregated feedback (CAFE), plus a single-client error-feedback reference.
//!
//! All three main algorithms share one engine. Each client computes its local
//! update `Δ_n = −γ Σ_j ∇f_n(x_n^j)` (one step by default), the server averages
//! the decoded contributions in ascending client order and applies
//! `x ← x + Δ_s`. With the identity compressor every algorithm therefore
//! performs the same floating-point operations and produces the same bits.

mod ef21;
mod engine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compressors::{CompressError, CompressorSpec};
use crate::objectives::Objective;
use crate::scalar::Scalar;

pub use ef21::ef21_reference;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error("config asks for {requested:?} but {called} was invoked")]
    WrongAlgorithm { requested: Algorithm, called: &'static str },
    #[error("the error-feedback reference needs exactly one client, suite has {0}")]
    RequiresSingleClient(usize),
    #[error(transparent)]
    Compress(#[from] CompressError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gd,
    Dcgd,
    Cafe,
    /// Single-client error feedback with a compressed control variate.
    Ef21,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Gd => "gd",
            Algorithm::Dcgd => "dcgd",
            Algorithm::Cafe => "cafe",
            Algorithm::Ef21 => "ef21",
        }
    }
}

fn default_local_steps() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub rounds: usize,
    #[serde(default)]
    pub compressor: CompressorSpec,
    #[serde(default = "default_local_steps")]
    pub local_steps: usize,
    /// Clients keep their own copy of the previous aggregate. When false the
    /// server ships it alongside the model each round.
    #[serde(default = "default_true")]
    pub stateful_clients: bool,
    /// Starting point. Defaults to a seeded direction at unit distance from the
    /// known minimizer (or from the origin when none is known).
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// Keep every iterate, aggregate and averaged compression error.
    #[serde(default)]
    pub record_history: bool,
    /// Evaluate clients on the rayon pool. Results are identical either way.
    #[serde(default)]
    pub parallel: bool,
    /// Apply the operator through the 32-bit wire format instead of in the
    /// working precision.
    #[serde(default)]
    pub wire_rounding: bool,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, gamma: f64, rounds: usize, compressor: CompressorSpec) -> Self {
        Self {
            algorithm,
            gamma,
            rounds,
            compressor,
            local_steps: 1,
            stateful_clients: true,
            x0: None,
            seed: 0,
            record_history: false,
            parallel: false,
            wire_rounding: false,
        }
    }

    pub fn with_history(mut self) -> Self {
        self.record_history = true;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, d: usize) -> Result<(), RunError> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(RunError::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.rounds == 0 {
            return Err(RunError::InvalidConfig("rounds must be at least 1".into()));
        }
        if self.local_steps == 0 {
            return Err(RunError::InvalidConfig("local_steps must be at least 1".into()));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != d {
                return Err(RunError::InvalidConfig(format!(
                    "x0 has length {}, expected {d}",
                    x0.len()
                )));
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(RunError::InvalidConfig("x0 is not finite".into()));
            }
        }
        self.compressor.validate(d)?;
        Ok(())
    }

    /// The starting iterate for an objective.
    pub fn initial_point<T: Scalar, O: Objective<T> + ?Sized>(&self, objective: &O) -> Vec<T> {
        if let Some(x0) = &self.x0 {
            return x0.iter().map(|&v| T::lit(v)).collect();
        }
        let d = objective.dim();
        let mut rng = crate::rng::stream(self.seed, "algorithms/x0");
        let mut v: Vec<T> = crate::rng::normal_vector(&mut rng, d);
        let n = crate::linalg::norm(&v);
        if n > T::zero() {
            v.iter_mut().for_each(|vi| *vi = *vi / n);
        }
        match objective.known_minimizer() {
            Some(xs) => crate::linalg::add(xs, &v),
            None => v,
        }
    }
}

/// Metrics of round `k`, measured at `x^k` before the update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord<T> {
    pub k: usize,
    pub grad_norm_sq: T,
    pub f_value: T,
    /// `‖ē^k‖²`, the averaged compression error rescaled by `1/γ`.
    pub error_norm_sq: T,
    pub client_error_mean: T,
    pub client_error_max: T,
    /// Cumulative through this round.
    pub uplink_bytes_total: u64,
    pub downlink_bytes_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { round: usize, reason: String },
}

/// Full per-round vectors, kept when `record_history` is set.
///
/// `iterates` holds `x^0 … x^K`; `aggregates[k]` is `Δ_s^k` and `errors[k]`
/// is `ē^k`, so `x^{k+1} = x^k + Δ_s^k`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History<T> {
    pub iterates: Vec<Vec<T>>,
    pub aggregates: Vec<Vec<T>>,
    pub errors: Vec<Vec<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace<T> {
    pub config: RunConfig,
    pub records: Vec<RoundRecord<T>>,
    pub status: RunStatus,
    pub x0: Vec<T>,
    pub final_x: Vec<T>,
    /// `f` and `‖∇f‖²` at `final_x`.
    pub final_f_value: T,
    pub final_grad_norm_sq: T,
    pub history: Option<History<T>>,
}

impl<T: Scalar> RunTrace<T> {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn grad_norms_sq(&self) -> Vec<T> {
        self.records.iter().map(|r| r.grad_norm_sq).collect()
    }

    /// First round with `‖∇f(x^k)‖² ≤ threshold`.
    pub fn rounds_to(&self, threshold: T) -> Option<usize> {
        self.records.iter().find(|r| r.grad_norm_sq <= threshold).map(|r| r.k)
    }
}

fn expect_algorithm(config: &RunConfig, wanted: Algorithm, called: &'static str) -> Result<(), RunError> {
    if config.algorithm == wanted {
        Ok(())
    } else {
        Err(RunError::WrongAlgorithm {
            requested: config.algorithm,
            called,
        })
    }
}

/// `x^{k+1} = x^k − γ∇f(x^k)` with uncompressed uploads.
pub fn run_gd<T: Scalar, O: Objective<T>>(objective: &O, config: &RunConfig) -> Result<RunTrace<T>, RunError> {
    expect_algorithm(config, Algorithm::Gd, "run_gd")?;
    engine::run(objective, config)
}

/// Clients upload `C(Δ_n)`.
pub fn run_dcgd<T: Scalar, O: Objective<T>>(objective: &O, config: &RunConfig) -> Result<RunTrace<T>, RunError> {
    expect_algorithm(config, Algorithm::Dcgd, "run_dcgd")?;
    engine::run(objective, config)
}

/// Clients upload `C(Δ_n − Δ_s^{k−1})`; the server adds `Δ_s^{k−1}` back.
pub fn run_cafe<T: Scalar, O: Objective<T>>(objective: &O, config: &RunConfig) -> Result<RunTrace<T>, RunError> {
    expect_algorithm(config, Algorithm::Cafe, "run_cafe")?;
    engine::run(objective, config)
}

/// Dispatches on `config.algorithm`.
pub fn run<T: Scalar, O: Objective<T>>(objective: &O, config: &RunConfig) -> Result<RunTrace<T>, RunError> {
    match config.algorithm {
        Algorithm::Gd | Algorithm::Dcgd | Algorithm::Cafe => engine::run(objective, config),
        Algorithm::Ef21 => ef21_reference(objective, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::objectives::QuadraticSuite;

    fn half_norm_sq(d: usize) -> QuadraticSuite<f64> {
        QuadraticSuite::new(vec![Matrix::identity(d)], vec![0.0; d]).unwrap()
    }

    #[test]
    fn scalar_dcgd_identity_step() {
        let cfg = RunConfig::new(Algorithm::Dcgd, 0.5, 1, CompressorSpec::Identity).with_x0(vec![1.0]);
        let t = run_dcgd(&half_norm_sq(1), &cfg).unwrap();
        assert_eq!(t.final_x, vec![0.5]);
    }

    #[test]
    fn gd_with_unit_step_lands_on_minimizer() {
        let cfg = RunConfig::new(Algorithm::Gd, 1.0, 1, CompressorSpec::Identity).with_x0(vec![1.0]);
        let t = run_gd(&half_norm_sq(1), &cfg).unwrap();
        assert_eq!(t.final_x, vec![0.0]);
        assert_eq!(t.records[0].error_norm_sq, 0.0);
    }

    #[test]
    fn dcgd_top1_hand_trace() {
        let cfg = RunConfig::new(Algorithm::Dcgd, 0.1, 1, CompressorSpec::top_k(1)).with_x0(vec![1.0, 0.5]);
        let t = run_dcgd(&half_norm_sq(2), &cfg).unwrap();
        assert!((t.final_x[0] - 0.9).abs() < 1e-15);
        assert_eq!(t.final_x[1], 0.5);
    }

    #[test]
    fn cafe_top1_hand_trace() {
        let cfg = RunConfig::new(Algorithm::Cafe, 0.1, 2, CompressorSpec::top_k(1))
            .with_x0(vec![1.0, 0.5])
            .with_history();
        let t = run_cafe(&half_norm_sq(2), &cfg).unwrap();
        let h = t.history.unwrap();
        assert!((h.iterates[1][0] - 0.9).abs() < 1e-15 && h.iterates[1][1] == 0.5);
        assert!((h.iterates[2][0] - 0.8).abs() < 1e-15);
        assert!((h.iterates[2][1] - 0.45).abs() < 1e-15);
        // the first round drops the second coordinate of (−0.1, −0.05)
        assert!(h.errors[0][0].abs() < 1e-15);
        assert!((h.errors[0][1].abs() - 0.5).abs() < 1e-12);
        assert!((t.records[0].error_norm_sq - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stateless_clients_only_change_downlink() {
        let d = 2;
        let base = RunConfig::new(Algorithm::Cafe, 0.1, 5, CompressorSpec::top_k(1)).with_x0(vec![1.0, 0.5]);
        let stateless = RunConfig {
            stateful_clients: false,
            ..base.clone()
        };
        let a = run_cafe(&half_norm_sq(d), &base).unwrap();
        let b = run_cafe(&half_norm_sq(d), &stateless).unwrap();
        assert_eq!(a.final_x, b.final_x);
        for (k, (ra, rb)) in a.records.iter().zip(&b.records).enumerate() {
            assert_eq!(ra.uplink_bytes_total, rb.uplink_bytes_total);
            assert_eq!(
                rb.downlink_bytes_total - ra.downlink_bytes_total,
                4 * d as u64 * (k as u64 + 1)
            );
        }
    }

    #[test]
    fn wrong_entry_point_is_rejected() {
        let cfg = RunConfig::new(Algorithm::Gd, 0.1, 1, CompressorSpec::Identity);
        assert!(matches!(
            run_cafe(&half_norm_sq(2), &cfg),
            Err(RunError::WrongAlgorithm { .. })
        ));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let s = half_norm_sq(2);
        let mut cfg = RunConfig::new(Algorithm::Gd, 0.0, 1, CompressorSpec::Identity);
        assert!(matches!(run_gd(&s, &cfg), Err(RunError::InvalidConfig(_))));
        cfg.gamma = 0.1;
        cfg.rounds = 0;
        assert!(matches!(run_gd(&s, &cfg), Err(RunError::InvalidConfig(_))));
        cfg.rounds = 1;
        cfg.x0 = Some(vec![1.0]);
        assert!(matches!(run_gd(&s, &cfg), Err(RunError::InvalidConfig(_))));
        let bad_k = RunConfig::new(Algorithm::Dcgd, 0.1, 1, CompressorSpec::top_k(3));
        assert!(matches!(run_dcgd(&s, &bad_k), Err(RunError::Compress(_))));
    }

    #[test]
    fn huge_step_is_flagged_as_diverged() {
        let cfg = RunConfig::new(Algorithm::Gd, 100.0, 50, CompressorSpec::Identity).with_x0(vec![1.0]);
        let t = run_gd(&half_norm_sq(1), &cfg).unwrap();
        assert!(t.diverged());
        assert!(t.records.len() < 50);
    }

    #[test]
    fn ef21_requires_one_client() {
        let s = QuadraticSuite::new(vec![Matrix::identity(2), Matrix::identity(2)], vec![0.0; 2]).unwrap();
        let cfg = RunConfig::new(Algorithm::Ef21, 0.1, 1, CompressorSpec::top_k(1));
        assert!(matches!(
            ef21_reference(&s, &cfg),
            Err(RunError::RequiresSingleClient(2))
        ));
    }

    #[test]
    fn default_start_is_unit_distance_from_minimizer() {
        let s = QuadraticSuite::new(vec![Matrix::identity(3)], vec![1.0, 2.0, 3.0]).unwrap();
        let cfg = RunConfig::new(Algorithm::Gd, 0.1, 1, CompressorSpec::Identity).with_seed(4);
        let x0: Vec<f64> = cfg.initial_point(&s);
        let dist = crate::linalg::norm(&crate::linalg::sub(&x0, &s.minimizer));
        assert!((dist - 1.0).abs() < 1e-14);
    }
}
