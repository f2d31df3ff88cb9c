//! Suite construction, step-size resolution and single-run execution.

use cafe_core::objectives::{generate_logistic_suite, generate_quadratic_suite};
use cafe_core::theory::{cafe_gamma_max, omega_for_checks, OmegaSource};
use cafe_core::{run, Algorithm, CompressorSpec, Objective, ProblemSuite, RunConfig, RunTrace};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RunVariant, StepRule, SuiteFamily, SuiteSpec, DEFAULT_B2_SAMPLES};
use crate::error::HarnessError;

/// Samples behind ω̂ for compressors without an analytic contraction factor.
pub const OMEGA_SAMPLES: usize = 1000;

pub fn build_suite(spec: &SuiteSpec, seed: u64) -> Result<ProblemSuite, HarnessError> {
    Ok(match spec.kind {
        SuiteFamily::Quadratic => ProblemSuite::quadratic(generate_quadratic_suite(&spec.quadratic_params(seed)))?,
        SuiteFamily::Logistic => ProblemSuite::logistic(
            generate_logistic_suite(&spec.logistic_params(seed)),
            spec.b2_samples.unwrap_or(DEFAULT_B2_SAMPLES),
            seed,
        )?,
    })
}

/// ω used for step rules and checks, with its provenance.
pub fn omega_of(spec: &CompressorSpec, d: usize, seed: u64) -> Result<(f64, OmegaSource), HarnessError> {
    Ok(omega_for_checks::<f64>(spec, d, OMEGA_SAMPLES, seed)?)
}

/// A run is stable when it completes without tripping the divergence guard
/// and ends no higher than it started.
pub fn is_stable(trace: &RunTrace) -> bool {
    !trace.diverged() && trace.records.first().is_some_and(|r| trace.final_f_value <= r.f_value)
}

/// Largest `2^j / L` over `j = max_exp, …, min_exp` (searched from the top)
/// whose run is stable; `None` when no grid point is.
pub fn largest_stable_on_grid(
    suite: &ProblemSuite,
    base: &RunConfig,
    min_exp: i32,
    max_exp: i32,
) -> Result<Option<f64>, HarnessError> {
    for j in (min_exp..=max_exp).rev() {
        let gamma = 2f64.powi(j) / suite.l;
        let config = RunConfig { gamma, ..base.clone() };
        if is_stable(&run(suite, &config)?) {
            return Ok(Some(gamma));
        }
    }
    Ok(None)
}

/// Geometric bisection for the stability edge between `lo` (must be stable)
/// and `hi`. Returns the largest stable step found after `iterations`
/// halvings of the log-interval.
pub fn bisect_largest_stable(
    suite: &ProblemSuite,
    base: &RunConfig,
    lo: f64,
    hi: f64,
    iterations: usize,
) -> Result<Option<f64>, HarnessError> {
    let stable = |gamma: f64| -> Result<bool, HarnessError> {
        let config = RunConfig { gamma, ..base.clone() };
        Ok(is_stable(&run(suite, &config)?))
    };
    if !stable(lo)? {
        return Ok(None);
    }
    if stable(hi)? {
        return Ok(Some(hi));
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..iterations {
        let mid = (lo * hi).sqrt();
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Everything a run needs besides the suite: the resolved core config and
/// where its step size came from.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub config: RunConfig,
    pub omega: f64,
    pub omega_source: OmegaSource,
}

pub fn base_config(variant: &RunVariant, rounds: usize, seed: u64) -> RunConfig {
    let mut config = RunConfig::new(variant.algorithm, 1.0, rounds, variant.compressor.clone()).with_seed(seed);
    config.local_steps = variant.local_steps;
    config.stateful_clients = variant.stateful_clients;
    config.wire_rounding = variant.wire_rounding;
    config.parallel = variant.parallel_clients;
    config
}

pub fn prepare(
    suite: &ProblemSuite,
    variant: &RunVariant,
    rounds: usize,
    seed: u64,
) -> Result<PreparedRun, HarnessError> {
    let (omega, omega_source) = omega_of(&variant.compressor, suite.dim(), seed)?;
    let mut config = base_config(variant, rounds, seed);
    config.gamma = match variant.step {
        StepRule::Absolute { value } => value,
        StepRule::InverseL { scale } => scale / suite.l,
        StepRule::CafeMax { scale } => scale * cafe_gamma_max(suite.l, omega),
        StepRule::Search { min_exp, max_exp } => {
            largest_stable_on_grid(suite, &config, min_exp, max_exp)?.unwrap_or(2f64.powi(min_exp) / suite.l)
        }
    };
    Ok(PreparedRun {
        config,
        omega,
        omega_source,
    })
}

/// Suite constants echoed into summaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConstants {
    pub l: f64,
    pub b2: f64,
    pub b2_is_lower_bound: bool,
    pub f_star: f64,
    pub n_clients: usize,
    pub dim: usize,
}

impl SuiteConstants {
    pub fn of(suite: &ProblemSuite) -> Self {
        Self {
            l: suite.l,
            b2: suite.b2,
            b2_is_lower_bound: suite.b2_is_lower_bound,
            f_star: suite.f_star,
            n_clients: suite.n_clients(),
            dim: suite.dim(),
        }
    }
}

/// One executed variant at one seed.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub id: String,
    pub variant: RunVariant,
    pub seed: u64,
    pub prepared: PreparedRun,
    pub constants: SuiteConstants,
    pub trace: RunTrace,
}

pub fn run_id(name: &str, seed: u64) -> String {
    format!("{}__seed{seed}", sanitize(name))
}

/// File-name-safe form of a label: ASCII alphanumerics, `-`, `_` and `.`
/// kept, runs of anything else collapsed to one `-`.
pub fn sanitize(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() || matches!(ch, '_' | '.') {
            out.push(ch);
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

pub fn execute(
    suite: &ProblemSuite,
    variant: &RunVariant,
    rounds: usize,
    seed: u64,
) -> Result<RunOutcome, HarnessError> {
    let prepared = prepare(suite, variant, rounds, seed)?;
    let trace = run(suite, &prepared.config)?;
    Ok(RunOutcome {
        id: run_id(&variant.name, seed),
        variant: variant.clone(),
        seed,
        prepared,
        constants: SuiteConstants::of(suite),
        trace,
    })
}

/// Every `runs` variant at every seed, in (seed, variant) order.
pub fn execute_all(
    cfg: &ExperimentConfig,
    with_history: bool,
) -> Result<Vec<(ProblemSuite, Vec<RunOutcome>)>, HarnessError> {
    use rayon::prelude::*;
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let suite = build_suite(&cfg.suite, seed)?;
            let outcomes = cfg
                .runs
                .iter()
                .map(|variant| {
                    let mut prepared = prepare(&suite, variant, cfg.rounds_for(variant), seed)?;
                    prepared.config.record_history = with_history;
                    let trace = run(&suite, &prepared.config)?;
                    Ok(RunOutcome {
                        id: run_id(&variant.name, seed),
                        variant: variant.clone(),
                        seed,
                        prepared,
                        constants: SuiteConstants::of(&suite),
                        trace,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()?;
            Ok((suite, outcomes))
        })
        .collect()
}

pub fn scheme_for(algorithm: Algorithm) -> Option<cafe_core::Scheme> {
    match algorithm {
        Algorithm::Gd | Algorithm::Dcgd => Some(cafe_core::Scheme::Dcgd),
        Algorithm::Cafe => Some(cafe_core::Scheme::Cafe),
        Algorithm::Ef21 => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitize_keeps_labels_readable() {
        assert_eq!(sanitize("topk(k=4)"), "topk-k-4");
        assert_eq!(sanitize("svd(r=1)+q(3)"), "svd-r-1-q-3");
        assert_eq!(sanitize("cafe_topk"), "cafe_topk");
    }

    #[test]
    fn grid_search_returns_a_stable_step() {
        let spec = SuiteSpec {
            kind: SuiteFamily::Quadratic,
            n_clients: Some(3),
            dim: Some(6),
            kappa: Some(10.0),
            heterogeneity: Some(0.5),
            samples_per_client: None,
            label_skew: None,
            lambda: None,
            b2_samples: None,
        };
        let suite = build_suite(&spec, 1).unwrap();
        let base = RunConfig::new(Algorithm::Gd, 1.0, 100, CompressorSpec::Identity);
        let gamma = largest_stable_on_grid(&suite, &base, -4, 4).unwrap().unwrap();
        // At 2/L the top eigendirection oscillates without growing while the
        // rest contracts, so f still ends below f(x^0); 4/L blows up.
        assert!((gamma * suite.l - 2.0).abs() < 1e-12, "{}", gamma * suite.l);
        let edge = bisect_largest_stable(&suite, &base, 1.0 / suite.l, 4.0 / suite.l, 30)
            .unwrap()
            .unwrap();
        assert!(edge * suite.l >= 2.0 && edge * suite.l < 2.5, "{}", edge * suite.l);
    }
}
