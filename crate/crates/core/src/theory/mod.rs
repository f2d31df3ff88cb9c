//! Convergence bounds for DCGD and CAFE, and checks of those bounds and of the
//! per-round inequalities behind them on executed traces.

mod checks;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algorithms::{Algorithm, RunTrace};
use crate::compressors::{omega_analytic, omega_estimate, CompressError, CompressorSpec};
use crate::scalar::Scalar;

pub use checks::{
    check_descent_recursion, check_lemma1, check_lemma2, check_lemma3, check_reconstruction, potential_trace,
    PotentialReport, ResidualReport,
};

/// Relative slack allowed on inequality checks.
pub const INEQUALITY_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("bound not applicable: {0}")]
    NotApplicable(String),
    #[error("invalid theorem inputs: {0}")]
    InvalidInputs(String),
    #[error("trace comes from {found:?}, check expects {expected:?}")]
    MismatchedAlgorithm { expected: Scheme, found: Algorithm },
    #[error("check needs an aggregated-feedback trace, got {0:?}")]
    RequiresCafe(Algorithm),
    #[error("check needs a trace recorded with history")]
    MissingHistory,
    #[error("check covers single local steps only, trace used {0}")]
    LocalSteps(usize),
    #[error("trace diverged")]
    Diverged,
    #[error(transparent)]
    Compress(#[from] CompressError),
}

/// Which theorem a bound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Dcgd,
    Cafe,
}

impl Scheme {
    /// Uncompressed GD is admissible under either theorem.
    fn accepts(self, algorithm: Algorithm) -> bool {
        match self {
            Scheme::Dcgd => matches!(algorithm, Algorithm::Dcgd | Algorithm::Gd),
            Scheme::Cafe => matches!(algorithm, Algorithm::Cafe | Algorithm::Gd),
        }
    }
}

/// `F₀ = f(x⁰) − f*`, `L`, `B²`, `ω`, `γ` and the horizon `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremInputs<T> {
    pub f0: T,
    pub l: T,
    pub b2: T,
    pub omega: T,
    pub gamma: T,
    pub k: usize,
}

impl<T: Scalar> TheoremInputs<T> {
    pub fn validate(&self) -> Result<(), TheoryError> {
        let finite = [self.f0, self.l, self.b2, self.omega, self.gamma]
            .iter()
            .all(|v| v.is_finite());
        let bad = |m: &str| Err(TheoryError::InvalidInputs(m.into()));
        if !finite {
            return bad("all inputs must be finite");
        }
        if self.f0 < T::zero() {
            return bad("F0 must be non-negative");
        }
        if !(self.l > T::zero()) {
            return bad("L must be positive");
        }
        if self.b2 < T::one() {
            return bad("B² must be at least 1");
        }
        if self.omega < T::zero() || self.omega >= T::one() {
            return bad("ω must lie in [0, 1)");
        }
        if !(self.gamma > T::zero()) {
            return bad("γ must be positive");
        }
        if self.k == 0 {
            return bad("K must be at least 1");
        }
        Ok(())
    }

    pub fn with_k(self, k: usize) -> Self {
        Self { k, ..self }
    }

    fn heterogeneity_gap(&self) -> Result<T, TheoryError> {
        let gap = T::one() - self.omega * self.b2;
        if gap > T::zero() {
            Ok(gap)
        } else {
            Err(TheoryError::NotApplicable(format!(
                "ωB² = {:.6} is not below 1",
                (self.omega * self.b2).to_f64_lossy()
            )))
        }
    }
}

/// `γ ≤ 1/L` up to the rounding of `1/L` itself.
fn within_cap<T: Scalar>(gamma: T, cap: T) -> bool {
    gamma <= cap * (T::one() + T::lit(1e-12))
}

/// `2 F₀ / (γ K (1 − ωB²))`, valid for `γ ≤ 1/L` and `ωB² < 1`.
pub fn dcgd_bound<T: Scalar>(inputs: &TheoremInputs<T>) -> Result<T, TheoryError> {
    inputs.validate()?;
    if !within_cap(inputs.gamma, T::one() / inputs.l) {
        return Err(TheoryError::NotApplicable(format!(
            "γ = {:e} exceeds 1/L = {:e}",
            inputs.gamma.to_f64_lossy(),
            (T::one() / inputs.l).to_f64_lossy()
        )));
    }
    let gap = inputs.heterogeneity_gap()?;
    Ok(T::lit(2.0) * inputs.f0 / (inputs.gamma * T::from_usize_lossy(inputs.k) * gap))
}

/// Largest admissible step for CAFE, `(1 − ω) / (L (1 + ω))`.
pub fn cafe_gamma_max<T: Scalar>(l: T, omega: T) -> T {
    (T::one() - omega) / (l * (T::one() + omega))
}

/// `2 F₀ (1 − ω) / (γ K (1 − ωB²))`, valid for `γ ≤ cafe_gamma_max` and
/// `ωB² < 1`.
pub fn cafe_bound<T: Scalar>(inputs: &TheoremInputs<T>) -> Result<T, TheoryError> {
    inputs.validate()?;
    let cap = cafe_gamma_max(inputs.l, inputs.omega);
    if !within_cap(inputs.gamma, cap) {
        return Err(TheoryError::NotApplicable(format!(
            "γ = {:e} exceeds (1 − ω)/(L(1 + ω)) = {:e}",
            inputs.gamma.to_f64_lossy(),
            cap.to_f64_lossy()
        )));
    }
    let gap = inputs.heterogeneity_gap()?;
    Ok(T::lit(2.0) * inputs.f0 * (T::one() - inputs.omega) / (inputs.gamma * T::from_usize_lossy(inputs.k) * gap))
}

pub fn bound<T: Scalar>(scheme: Scheme, inputs: &TheoremInputs<T>) -> Result<T, TheoryError> {
    match scheme {
        Scheme::Dcgd => dcgd_bound(inputs),
        Scheme::Cafe => cafe_bound(inputs),
    }
}

/// Where the ω fed into a check came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaSource {
    Analytic,
    /// Sampled; checks using it are heuristic.
    Estimated,
}

/// Analytic ω when known, otherwise a seeded estimate over `samples` vectors.
pub fn omega_for_checks<T: Scalar>(
    spec: &CompressorSpec,
    d: usize,
    samples: usize,
    seed: u64,
) -> Result<(T, OmegaSource), TheoryError> {
    match omega_analytic(spec, d) {
        Some(w) => Ok((w, OmegaSource::Analytic)),
        None => Ok((omega_estimate(spec, d, samples, seed)?, OmegaSource::Estimated)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<T> {
    pub scheme: Scheme,
    pub applicable: bool,
    /// Why the bound does not apply, when it does not.
    pub reason: Option<String>,
    pub bound_value: Option<T>,
    /// `(1/K) Σ_{k<K} ‖∇f(x^k)‖²`.
    pub empirical_value: T,
    pub satisfied: bool,
    /// `bound − empirical` when applicable.
    pub margin: Option<T>,
    pub k: usize,
}

fn mean_prefix<T: Scalar>(trace: &RunTrace<T>, k: usize) -> T {
    let sum = trace.records[..k].iter().fold(T::zero(), |acc, r| acc + r.grad_norm_sq);
    sum / T::from_usize_lossy(k)
}

fn report<T: Scalar>(scheme: Scheme, inputs: &TheoremInputs<T>, empirical: T) -> Result<BoundReport<T>, TheoryError> {
    match bound(scheme, inputs) {
        Ok(b) => Ok(BoundReport {
            scheme,
            applicable: true,
            reason: None,
            bound_value: Some(b),
            empirical_value: empirical,
            satisfied: empirical <= b * (T::one() + T::lit(INEQUALITY_SLACK)),
            margin: Some(b - empirical),
            k: inputs.k,
        }),
        Err(TheoryError::NotApplicable(reason)) => Ok(BoundReport {
            scheme,
            applicable: false,
            reason: Some(reason),
            bound_value: None,
            empirical_value: empirical,
            satisfied: false,
            margin: None,
            k: inputs.k,
        }),
        Err(e) => Err(e),
    }
}

fn check_trace_shape<T: Scalar>(trace: &RunTrace<T>, scheme: Scheme, k: usize) -> Result<(), TheoryError> {
    if !scheme.accepts(trace.config.algorithm) {
        return Err(TheoryError::MismatchedAlgorithm {
            expected: scheme,
            found: trace.config.algorithm,
        });
    }
    if trace.diverged() {
        return Err(TheoryError::Diverged);
    }
    if trace.config.local_steps != 1 {
        return Err(TheoryError::LocalSteps(trace.config.local_steps));
    }
    if k > trace.records.len() {
        return Err(TheoryError::InvalidInputs(format!(
            "K = {k} exceeds the {} recorded rounds",
            trace.records.len()
        )));
    }
    Ok(())
}

/// Compares the averaged squared gradient norm over the first `inputs.k`
/// rounds with the theorem's bound.
pub fn check_bound_on_trace<T: Scalar>(
    trace: &RunTrace<T>,
    inputs: &TheoremInputs<T>,
    scheme: Scheme,
) -> Result<BoundReport<T>, TheoryError> {
    check_trace_shape(trace, scheme, inputs.k)?;
    inputs.validate()?;
    report(scheme, inputs, mean_prefix(trace, inputs.k))
}

/// Summary of the bound checked at every horizon `K = 1 … len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixReport<T> {
    pub scheme: Scheme,
    pub horizons: usize,
    pub applicable: bool,
    pub reason: Option<String>,
    /// Horizons where the empirical average exceeded the bound.
    pub violations: Vec<usize>,
    /// Largest `empirical / bound` over all horizons.
    pub worst_ratio: Option<T>,
}

impl<T> PrefixReport<T> {
    pub fn satisfied(&self) -> bool {
        self.applicable && self.violations.is_empty()
    }
}

pub fn check_bound_every_prefix<T: Scalar>(
    trace: &RunTrace<T>,
    inputs: &TheoremInputs<T>,
    scheme: Scheme,
) -> Result<PrefixReport<T>, TheoryError> {
    let horizons = inputs.k;
    check_trace_shape(trace, scheme, horizons)?;
    inputs.validate()?;
    let mut sum = T::zero();
    let mut violations = Vec::new();
    let mut worst: Option<T> = None;
    for k in 1..=horizons {
        sum = sum + trace.records[k - 1].grad_norm_sq;
        let empirical = sum / T::from_usize_lossy(k);
        match bound(scheme, &inputs.with_k(k)) {
            Ok(b) => {
                if empirical > b * (T::one() + T::lit(INEQUALITY_SLACK)) {
                    violations.push(k);
                }
                let ratio = empirical / b;
                worst = Some(worst.map_or(ratio, |w| w.max(ratio)));
            }
            Err(TheoryError::NotApplicable(reason)) => {
                return Ok(PrefixReport {
                    scheme,
                    horizons,
                    applicable: false,
                    reason: Some(reason),
                    violations,
                    worst_ratio: None,
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(PrefixReport {
        scheme,
        horizons,
        applicable: true,
        reason: None,
        violations,
        worst_ratio: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(omega: f64, gamma: f64) -> TheoremInputs<f64> {
        TheoremInputs {
            f0: 1.0,
            l: 1.0,
            b2: 1.0,
            omega,
            gamma,
            k: 100,
        }
    }

    #[test]
    fn corollary_values() {
        assert!((dcgd_bound(&inputs(0.5, 1.0)).unwrap() - 0.04).abs() < 1e-15);
        let g: f64 = cafe_gamma_max(1.0, 0.5);
        assert!((g - 1.0 / 3.0).abs() < 1e-15);
        assert!((cafe_bound(&inputs(0.5, g)).unwrap() - 0.06).abs() < 1e-15);
    }

    #[test]
    fn gamma_caps() {
        assert_eq!(cafe_gamma_max(2.0, 0.0), 0.5);
        assert!((cafe_gamma_max(2.0f64, 0.5) - 1.0 / 6.0).abs() < 1e-16);
    }

    #[test]
    fn preconditions_are_enforced() {
        let mut i = inputs(0.6, 1.0);
        i.b2 = 2.0;
        assert!(matches!(dcgd_bound(&i), Err(TheoryError::NotApplicable(_))));
        assert!(matches!(
            dcgd_bound(&inputs(0.5, 1.5)),
            Err(TheoryError::NotApplicable(_))
        ));
        assert!(matches!(
            cafe_bound(&inputs(0.5, 0.5)),
            Err(TheoryError::NotApplicable(_))
        ));
        assert!(matches!(
            dcgd_bound(&inputs(1.0, 0.5)),
            Err(TheoryError::InvalidInputs(_))
        ));
    }
}
