use cafe_core::objectives::{generate_logistic_suite, generate_quadratic_suite, LogisticParams, QuadraticParams};
use cafe_core::rng::{normal_vector, stream};
use cafe_core::theory::{
    bound, cafe_bound, cafe_gamma_max, check_bound_every_prefix, check_bound_on_trace, check_descent_recursion,
    check_lemma1, check_lemma2, check_lemma3, check_reconstruction, dcgd_bound, omega_for_checks, potential_trace,
};
use cafe_core::{
    run, Algorithm, CompressorSpec, Objective, ProblemSuite, RunConfig, RunTrace, Scheme, TheoremInputs, TheoryError,
};
use proptest::prelude::*;

fn quadratic(seed: u64, h: f64) -> ProblemSuite {
    ProblemSuite::quadratic(generate_quadratic_suite(&QuadraticParams {
        seed,
        n_clients: 10,
        dim: 20,
        kappa: 10.0,
        heterogeneity: h,
    }))
    .unwrap()
}

fn inputs_for(suite: &ProblemSuite, trace: &RunTrace, omega: f64, gamma: f64) -> TheoremInputs {
    TheoremInputs {
        f0: trace.records[0].f_value - suite.f_star,
        l: suite.l,
        b2: suite.b2,
        omega,
        gamma,
        k: trace.records.len(),
    }
}

fn admissible() -> impl Strategy<Value = TheoremInputs> {
    (
        1e-3f64..1e3,
        1e-2f64..1e2,
        0.0f64..0.99,
        0.0f64..1.0,
        1e-3f64..1.0,
        1usize..10_000,
    )
        .prop_map(|(f0, l, omega, b2_frac, gamma_frac, k)| {
            // B² in [1, 1/ω) keeps ωB² < 1.
            let b2_max = if omega > 0.0 { (1.0 / omega).min(1e3) } else { 1e3 };
            let b2 = 1.0 + b2_frac * (b2_max - 1.0) * 0.999;
            let gamma = gamma_frac * (1.0 - omega) / (l * (1.0 + omega));
            TheoremInputs {
                f0,
                l,
                b2,
                omega,
                gamma,
                k,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn bounds_match_direct_arithmetic(t in admissible()) {
        let gap = 1.0 - t.omega * t.b2;
        let by_hand_dcgd = 2.0 * t.f0 / t.gamma / t.k as f64 / gap;
        let by_hand_cafe = by_hand_dcgd * (1.0 - t.omega);
        let d = dcgd_bound(&t).unwrap();
        let c = cafe_bound(&t).unwrap();
        prop_assert!((d - by_hand_dcgd).abs() <= 1e-12 * by_hand_dcgd);
        prop_assert!((c - by_hand_cafe).abs() <= 1e-12 * by_hand_cafe);
    }

    #[test]
    fn shared_step_improves_rate_by_one_minus_omega(t in admissible()) {
        let ratio = cafe_bound(&t).unwrap() / dcgd_bound(&t).unwrap();
        prop_assert!((ratio - (1.0 - t.omega)).abs() <= 1e-12);
    }

    #[test]
    fn corollary_forms_agree(t in admissible()) {
        let gap = 1.0 - t.omega * t.b2;
        let at_inverse_l = TheoremInputs { gamma: 1.0 / t.l, ..t };
        let expected = 2.0 * t.l * t.f0 / (t.k as f64 * gap);
        prop_assert!((dcgd_bound(&at_inverse_l).unwrap() - expected).abs() <= 1e-12 * expected);
        let at_cap = TheoremInputs { gamma: cafe_gamma_max(t.l, t.omega), ..t };
        let expected = 2.0 * t.l * t.f0 * (1.0 + t.omega) / (t.k as f64 * gap);
        prop_assert!((cafe_bound(&at_cap).unwrap() - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn step_cap_decreases_in_omega(l in 1e-2f64..1e2, a in 0.0f64..0.999, b in 0.0f64..0.999) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(cafe_gamma_max(l, hi) <= cafe_gamma_max(l, lo));
    }
}

#[test]
fn pinned_bound_values() {
    let t = TheoremInputs {
        f0: 1.0,
        l: 1.0,
        b2: 1.0,
        omega: 0.5,
        gamma: 1.0,
        k: 100,
    };
    assert!((dcgd_bound(&t).unwrap() - 0.04).abs() < 1e-15);
    let t = TheoremInputs {
        gamma: cafe_gamma_max(1.0, 0.5),
        ..t
    };
    assert!((cafe_bound(&t).unwrap() - 0.06).abs() < 1e-15);
    assert!((cafe_gamma_max(2.0f64, 0.5) - 1.0 / 6.0).abs() < 1e-16);
    assert_eq!(cafe_gamma_max(2.0f64, 0.0), 0.5);
    let lossless = TheoremInputs {
        omega: 0.0,
        gamma: 1.0,
        ..t
    };
    assert_eq!(dcgd_bound(&lossless).unwrap(), cafe_bound(&lossless).unwrap());
    let heterogeneous = TheoremInputs { b2: 2.4, ..t };
    assert!(matches!(dcgd_bound(&heterogeneous), Err(TheoryError::NotApplicable(_))));
}

#[test]
fn seed_seven_suite_satisfies_both_theorems() {
    let suite = quadratic(7, 1.0);
    let spec = CompressorSpec::top_k(10);
    let (omega, _) = omega_for_checks::<f64>(&spec, suite.dim(), 1, 0).unwrap();
    assert!(omega * suite.b2 < 1.0, "ωB² = {}", omega * suite.b2);

    let gamma = 1.0 / suite.l;
    let dcgd: RunTrace = run(&suite, &RunConfig::new(Algorithm::Dcgd, gamma, 300, spec.clone())).unwrap();
    let report = check_bound_on_trace(&dcgd, &inputs_for(&suite, &dcgd, omega, gamma), Scheme::Dcgd).unwrap();
    assert!(report.applicable && report.satisfied, "{report:?}");

    let gamma = cafe_gamma_max(suite.l, omega);
    let cafe: RunTrace = run(&suite, &RunConfig::new(Algorithm::Cafe, gamma, 300, spec)).unwrap();
    let inputs = inputs_for(&suite, &cafe, omega, gamma);
    let prefix = check_bound_every_prefix(&cafe, &inputs, Scheme::Cafe).unwrap();
    assert!(prefix.satisfied(), "{prefix:?}");
    assert!(prefix.worst_ratio.unwrap() < 1.0);
}

#[test]
fn gradient_descent_meets_the_uncompressed_rate() {
    let suite = quadratic(3, 0.5);
    let gamma = 1.0 / suite.l;
    let trace: RunTrace = run(
        &suite,
        &RunConfig::new(Algorithm::Gd, gamma, 200, CompressorSpec::Identity),
    )
    .unwrap();
    let inputs = inputs_for(&suite, &trace, 0.0, gamma);
    for scheme in [Scheme::Dcgd, Scheme::Cafe] {
        let report = check_bound_every_prefix(&trace, &inputs, scheme).unwrap();
        assert!(report.satisfied(), "{scheme:?}");
    }
}

#[test]
fn mismatched_algorithm_is_rejected() {
    let suite = quadratic(3, 0.5);
    let gamma = 0.5 / suite.l;
    let trace: RunTrace = run(
        &suite,
        &RunConfig::new(Algorithm::Dcgd, gamma, 10, CompressorSpec::top_k(10)),
    )
    .unwrap();
    let inputs = inputs_for(&suite, &trace, 0.5, gamma);
    assert!(matches!(
        check_bound_on_trace(&trace, &inputs, Scheme::Cafe),
        Err(TheoryError::MismatchedAlgorithm { .. })
    ));
    assert!(matches!(
        check_lemma2(&trace, &suite, &inputs),
        Err(TheoryError::RequiresCafe(_))
    ));
}

fn lemma_suite_holds(suite: &ProblemSuite, spec: CompressorSpec, rounds: usize) {
    let d = suite.dim();
    let (omega, _) = omega_for_checks::<f64>(&spec, d, 1, 0).unwrap();
    assert!(omega * suite.b2 < 1.0, "{}: ωB² = {}", spec.label(), omega * suite.b2);
    let runs = [
        (Algorithm::Dcgd, 1.0 / suite.l),
        (Algorithm::Cafe, cafe_gamma_max(suite.l, omega)),
    ];
    for (alg, gamma) in runs {
        let trace: RunTrace = run(suite, &RunConfig::new(alg, gamma, rounds, spec.clone()).with_history()).unwrap();
        let label = format!("{alg:?} {}", spec.label());
        let recon = check_reconstruction(&trace, suite).unwrap();
        assert!(recon.iter().all(|&r| r <= 1e-12), "{label}: reconstruction");
        assert!(
            check_descent_recursion(&trace, suite, gamma, suite.l).unwrap().holds(),
            "{label}: descent"
        );
        assert!(
            check_lemma1(&trace, suite, gamma, suite.l).unwrap().holds(),
            "{label}: lemma 1"
        );
        if alg == Algorithm::Cafe {
            let inputs = inputs_for(suite, &trace, omega, gamma);
            let l2 = check_lemma2(&trace, suite, &inputs).unwrap();
            assert!(l2.holds(), "{label}: lemma 2 violated at {:?}", l2.violations());
            let potential = potential_trace(&trace, &inputs).unwrap();
            let decrease = potential.decrease.expect("γ at the cap is admissible");
            assert!(
                decrease.holds(),
                "{label}: potential violated at {:?}",
                decrease.violations()
            );
        }
        let h = trace.history.as_ref().unwrap();
        assert!(
            check_lemma3(suite, suite.l, suite.f_star, &h.iterates).holds(),
            "{label}: lemma 3"
        );
    }
}

#[test]
fn lemmas_hold_on_top_k_traces() {
    lemma_suite_holds(&quadratic(7, 1.0), CompressorSpec::top_k(10), 400);
}

#[test]
fn lemmas_hold_on_low_rank_traces() {
    // Rank 1 of a 5×4 reshape has ω = 0.75, so heterogeneity must stay mild.
    lemma_suite_holds(&quadratic(7, 0.2), CompressorSpec::svd(1), 400);
}

#[test]
fn lossless_lemmas_are_tight() {
    let suite = quadratic(2, 0.5);
    let gamma = 1.0 / suite.l;
    let trace: RunTrace = run(
        &suite,
        &RunConfig::new(Algorithm::Cafe, gamma, 50, CompressorSpec::Identity).with_history(),
    )
    .unwrap();
    let inputs = inputs_for(&suite, &trace, 0.0, gamma);
    let l2 = check_lemma2(&trace, &suite, &inputs).unwrap();
    assert!(l2.residuals.iter().all(|&r| r == 0.0));
    let potential = potential_trace(&trace, &inputs).unwrap();
    for (psi, r) in potential.psi.iter().zip(&trace.records) {
        assert_eq!(*psi, r.f_value);
    }
}

#[test]
fn oversized_step_still_evaluates() {
    let suite = quadratic(4, 0.5);
    let gamma = 10.0 / suite.l;
    let trace: RunTrace = run(
        &suite,
        &RunConfig::new(Algorithm::Dcgd, gamma, 5, CompressorSpec::top_k(10)).with_history(),
    )
    .unwrap();
    let descent = check_descent_recursion(&trace, &suite, gamma, suite.l).unwrap();
    assert_eq!(descent.len(), trace.records.len());
    assert!(descent.holds());
    let inputs = inputs_for(&suite, &trace, 0.5, gamma);
    assert!(matches!(
        bound(Scheme::Dcgd, &inputs),
        Err(TheoryError::NotApplicable(_))
    ));
}

#[test]
fn over_cap_step_skips_potential_decrease() {
    let suite = quadratic(4, 0.5);
    let omega = 0.5;
    let gamma = 2.0 * cafe_gamma_max(suite.l, omega);
    let trace: RunTrace = run(
        &suite,
        &RunConfig::new(Algorithm::Cafe, gamma, 20, CompressorSpec::top_k(10)),
    )
    .unwrap();
    let potential = potential_trace(&trace, &inputs_for(&suite, &trace, omega, gamma)).unwrap();
    assert!(potential.decrease.is_none());
    assert_eq!(potential.psi.len(), 20);
}

/// `f(x) = ½‖x‖²` on one client.
struct HalfSquare;

impl Objective<f64> for HalfSquare {
    fn n_clients(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        3
    }

    fn client_value(&self, _: usize, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn client_gradient(&self, _: usize, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[test]
fn suboptimality_lemma_is_tight_on_half_square() {
    let mut rng = stream(1, "test/half-square");
    let points: Vec<Vec<f64>> = (0..100).map(|_| normal_vector(&mut rng, 3)).collect();
    let report = check_lemma3(&HalfSquare, 1.0, 0.0, &points);
    assert!(report.holds());
    assert!(report.residuals.iter().all(|r| r.abs() < 1e-12));
}

#[test]
fn suboptimality_lemma_on_logistic_suite() {
    let suite = ProblemSuite::logistic(
        generate_logistic_suite(&LogisticParams {
            seed: 5,
            n_clients: 4,
            dim: 10,
            samples_per_client: 50,
            label_skew: 0.8,
            lambda: 1e-2,
        }),
        100,
        5,
    )
    .unwrap();
    assert!(suite.b2_is_lower_bound);
    let mut rng = stream(5, "test/logistic-lemma3");
    let points: Vec<Vec<f64>> = (0..200).map(|_| normal_vector(&mut rng, 10)).collect();
    assert!(check_lemma3(&suite, suite.l, suite.f_star, &points).holds());
}
