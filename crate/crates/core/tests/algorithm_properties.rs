use cafe_core::objectives::{generate_quadratic_suite, QuadraticParams};
use cafe_core::theory::omega_for_checks;
use cafe_core::{
    ef21_reference, run, run_cafe, run_dcgd, run_gd, Algorithm, CompressorSpec, Objective, ProblemSuite,
    ProblemSuite32, RunConfig, RunStatus, RunTrace,
};
use proptest::prelude::*;

fn quadratic(seed: u64, n: usize, d: usize, h: f64) -> ProblemSuite {
    ProblemSuite::quadratic(generate_quadratic_suite(&QuadraticParams {
        seed,
        n_clients: n,
        dim: d,
        kappa: 20.0,
        heterogeneity: h,
    }))
    .unwrap()
}

fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn bits(trace: &RunTrace) -> Vec<(u64, u64, u64)> {
    trace
        .records
        .iter()
        .map(|r| (r.f_value.to_bits(), r.grad_norm_sq.to_bits(), r.error_norm_sq.to_bits()))
        .collect()
}

fn x_bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

/// Sort-based top-k, ties to the lower index.
fn top_k_oracle(x: &[f64], k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; x.len()];
    for &i in &idx[..k] {
        out[i] = x[i];
    }
    out
}

/// Aggregated-feedback rounds written out directly from the update rule.
fn cafe_by_hand(suite: &ProblemSuite, x0: &[f64], gamma: f64, rounds: usize, k: usize) -> Vec<Vec<f64>> {
    let n = suite.n_clients();
    let d = suite.dim();
    let mut x = x0.to_vec();
    let mut prev = vec![0.0; d];
    let mut iterates = vec![x.clone()];
    for _ in 0..rounds {
        let mut sum = vec![0.0; d];
        for c in 0..n {
            let g = suite.client_gradient(c, &x);
            let u: Vec<f64> = g.iter().zip(&prev).map(|(gi, p)| -gamma * gi - p).collect();
            let cu = top_k_oracle(&u, k);
            for j in 0..d {
                sum[j] += cu[j] + prev[j];
            }
        }
        prev = sum.iter().map(|s| s / n as f64).collect();
        for j in 0..d {
            x[j] += prev[j];
        }
        iterates.push(x.clone());
    }
    iterates
}

#[test]
fn lossless_compression_collapses_to_gradient_descent() {
    let suite = quadratic(1, 6, 30, 0.7);
    let gamma = 1.0 / suite.l;
    let make = |alg| RunConfig::new(alg, gamma, 200, CompressorSpec::Identity).with_seed(4);
    let gd: RunTrace = run_gd(&suite, &make(Algorithm::Gd)).unwrap();
    let dcgd: RunTrace = run_dcgd(&suite, &make(Algorithm::Dcgd)).unwrap();
    let cafe: RunTrace = run_cafe(&suite, &make(Algorithm::Cafe)).unwrap();
    assert_eq!(bits(&gd), bits(&dcgd));
    assert_eq!(bits(&gd), bits(&cafe));
    assert_eq!(x_bits(&gd.final_x), x_bits(&cafe.final_x));
    assert!(cafe.records.iter().all(|r| r.error_norm_sq == 0.0));
}

#[test]
fn single_client_matches_error_feedback_reference() {
    let suite = quadratic(2, 1, 25, 0.0);
    let gamma = 0.5 / suite.l;
    for spec in [
        CompressorSpec::top_k(3),
        CompressorSpec::svd(1),
        CompressorSpec::quant(6),
    ] {
        let cafe: RunTrace = run_cafe(
            &suite,
            &RunConfig::new(Algorithm::Cafe, gamma, 100, spec.clone()).with_history(),
        )
        .unwrap();
        let ef21: RunTrace = ef21_reference(
            &suite,
            &RunConfig::new(Algorithm::Ef21, gamma, 100, spec.clone()).with_history(),
        )
        .unwrap();
        let (a, b) = (cafe.history.unwrap(), ef21.history.unwrap());
        for (k, (xa, xb)) in a.iterates.iter().zip(&b.iterates).enumerate() {
            let gap = norm_sq(&xa.iter().zip(xb).map(|(p, q)| p - q).collect::<Vec<_>>()).sqrt();
            let scale = 1.0 + norm_sq(xa).sqrt();
            assert!(gap <= 1e-12 * scale, "{} round {k}: gap {gap:e}", spec.label());
        }
        assert_eq!(
            cafe.records.last().unwrap().uplink_bytes_total,
            ef21.records.last().unwrap().uplink_bytes_total
        );
    }
}

#[test]
fn engine_matches_hand_written_rounds() {
    let suite = quadratic(3, 4, 12, 0.8);
    let gamma = 0.3 / suite.l;
    let config = RunConfig::new(Algorithm::Cafe, gamma, 60, CompressorSpec::top_k(2)).with_history();
    let trace: RunTrace = run_cafe(&suite, &config).unwrap();
    let oracle = cafe_by_hand(&suite, &trace.x0, gamma, 60, 2);
    for (k, (ours, theirs)) in trace.history.unwrap().iterates.iter().zip(&oracle).enumerate() {
        for (a, b) in ours.iter().zip(theirs) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "round {k}: {a} vs {b}");
        }
    }
}

#[test]
fn iterates_follow_gradient_plus_averaged_error() {
    let suite = quadratic(4, 5, 16, 1.0);
    for alg in [Algorithm::Dcgd, Algorithm::Cafe] {
        for spec in [
            CompressorSpec::top_k(4),
            CompressorSpec::svd(1),
            CompressorSpec::quant(3),
        ] {
            let gamma = 0.4 / suite.l;
            let trace: RunTrace = run(&suite, &RunConfig::new(alg, gamma, 40, spec).with_history()).unwrap();
            let h = trace.history.unwrap();
            for k in 0..h.errors.len() {
                let g = suite.gradient(&h.iterates[k]);
                for (j, gj) in g.iter().enumerate() {
                    let predicted = h.iterates[k][j] - gamma * (gj + h.errors[k][j]);
                    let got = h.iterates[k + 1][j];
                    assert!(
                        (got - predicted).abs() <= 1e-12 * (1.0 + got.abs()),
                        "{alg:?} round {k}"
                    );
                }
                assert_eq!(trace.records[k].error_norm_sq, norm_sq(&h.errors[k]));
            }
        }
    }
}

#[test]
fn parallel_and_serial_runs_are_bit_identical() {
    let suite = quadratic(5, 8, 24, 0.9);
    for alg in [Algorithm::Dcgd, Algorithm::Cafe] {
        let mut config = RunConfig::new(alg, 0.5 / suite.l, 100, CompressorSpec::svd(1)).with_seed(2);
        let serial: RunTrace = run(&suite, &config).unwrap();
        config.parallel = true;
        let parallel: RunTrace = run(&suite, &config).unwrap();
        assert_eq!(bits(&serial), bits(&parallel));
        assert_eq!(x_bits(&serial.final_x), x_bits(&parallel.final_x));
    }
}

/// `f_n(x) = ½‖x − c_n‖²`, cheap in any dimension.
struct Separable {
    centers: Vec<Vec<f64>>,
}

impl Objective<f64> for Separable {
    fn n_clients(&self) -> usize {
        self.centers.len()
    }

    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn client_value(&self, n: usize, x: &[f64]) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.centers[n])
            .map(|(a, c)| (a - c) * (a - c))
            .sum::<f64>()
    }

    fn client_gradient(&self, n: usize, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.centers[n]).map(|(a, c)| a - c).collect()
    }
}

#[test]
fn top_k_message_size_in_high_dimension() {
    let d = 10_000;
    let centers = (0..3)
        .map(|n| (0..d).map(|j| ((j * 7 + n * 13) % 101) as f64 - 50.0).collect())
        .collect();
    let obj = Separable { centers };
    for alg in [Algorithm::Dcgd, Algorithm::Cafe] {
        let trace: RunTrace = run(&obj, &RunConfig::new(alg, 0.5, 2, CompressorSpec::top_k(100))).unwrap();
        assert_eq!(trace.records[0].uplink_bytes_total, 3 * 816);
        assert_eq!(trace.records[1].uplink_bytes_total, 6 * 816);
        assert_eq!(trace.records[1].downlink_bytes_total, 2 * (16 + 4 * d as u64));
    }
    let mut config = RunConfig::new(Algorithm::Cafe, 0.5, 3, CompressorSpec::top_k(100));
    let stateful: RunTrace = run(&obj, &config).unwrap();
    config.stateful_clients = false;
    let stateless: RunTrace = run(&obj, &config).unwrap();
    assert_eq!(x_bits(&stateful.final_x), x_bits(&stateless.final_x));
    for (a, b) in stateful.records.iter().zip(&stateless.records) {
        assert_eq!(a.uplink_bytes_total, b.uplink_bytes_total);
        assert_eq!(
            b.downlink_bytes_total - a.downlink_bytes_total,
            4 * d as u64 * (a.k as u64 + 1)
        );
    }
}

#[test]
fn direct_compression_error_is_bounded_by_client_gradients() {
    let suite = quadratic(6, 6, 20, 1.0);
    let spec = CompressorSpec::top_k(5);
    let (omega, _) = omega_for_checks::<f64>(&spec, suite.dim(), 1, 0).unwrap();
    let trace: RunTrace = run_dcgd(
        &suite,
        &RunConfig::new(Algorithm::Dcgd, 0.5 / suite.l, 80, spec).with_history(),
    )
    .unwrap();
    let h = trace.history.unwrap();
    let n = suite.n_clients() as f64;
    for (k, r) in trace.records.iter().enumerate() {
        let local: f64 = (0..suite.n_clients())
            .map(|c| norm_sq(&suite.client_gradient(c, &h.iterates[k])))
            .sum();
        let bound = omega / n * local;
        assert!(
            r.error_norm_sq <= bound * (1.0 + 1e-12),
            "round {k}: {} > {bound}",
            r.error_norm_sq
        );
        assert!(r.client_error_mean <= omega * local / n * (1.0 + 1e-12));
    }
}

#[test]
fn gradient_descent_decreases_monotonically_below_inverse_smoothness() {
    let suite = quadratic(7, 5, 40, 0.5);
    for scale in [0.25, 0.5, 1.0] {
        let trace: RunTrace = run_gd(
            &suite,
            &RunConfig::new(Algorithm::Gd, scale / suite.l, 300, CompressorSpec::Identity),
        )
        .unwrap();
        for w in trace.records.windows(2) {
            assert!(w[1].f_value <= w[0].f_value, "γL = {scale}: f rose at round {}", w[1].k);
        }
        assert!(trace.final_f_value <= trace.records.last().unwrap().f_value);
    }
}

#[test]
fn several_local_steps_still_converge() {
    let suite = quadratic(8, 4, 20, 0.5);
    let gamma = 0.2 / suite.l;
    let mut config = RunConfig::new(Algorithm::Cafe, gamma, 200, CompressorSpec::top_k(5));
    let one: RunTrace = run(&suite, &config).unwrap();
    config.local_steps = 3;
    let three: RunTrace = run(&suite, &config).unwrap();
    assert_eq!(three.status, RunStatus::Completed);
    let start = three.records[0].grad_norm_sq;
    assert!(
        three.final_grad_norm_sq < 1e-6 * start,
        "{}",
        three.final_grad_norm_sq / start
    );
    assert!(three.final_grad_norm_sq < one.final_grad_norm_sq);
}

#[test]
fn wire_rounding_tracks_exact_arithmetic() {
    let suite = quadratic(9, 5, 25, 0.5);
    let mut config = RunConfig::new(Algorithm::Cafe, 0.3 / suite.l, 100, CompressorSpec::svd(2));
    let exact: RunTrace = run(&suite, &config).unwrap();
    config.wire_rounding = true;
    let wire: RunTrace = run(&suite, &config).unwrap();
    assert_eq!(
        exact.records.last().unwrap().uplink_bytes_total,
        wire.records.last().unwrap().uplink_bytes_total
    );
    for (a, b) in exact.records.iter().zip(&wire.records) {
        assert!(
            (a.f_value - b.f_value).abs() <= 1e-5 * (1.0 + a.f_value.abs()),
            "round {}",
            a.k
        );
    }
}

#[test]
fn single_precision_follows_double_precision() {
    let params = QuadraticParams {
        seed: 10,
        n_clients: 4,
        dim: 15,
        kappa: 10.0,
        heterogeneity: 0.5,
    };
    let s64 = ProblemSuite::quadratic(generate_quadratic_suite(&params)).unwrap();
    let s32 = ProblemSuite32::quadratic(generate_quadratic_suite(&params)).unwrap();
    let config = RunConfig::new(Algorithm::Cafe, 0.5 / s64.l, 50, CompressorSpec::top_k(3));
    let a: RunTrace = run(&s64, &config).unwrap();
    let b = run(&s32, &config).unwrap();
    for (r64, r32) in a.records.iter().zip(&b.records) {
        let f32v = f64::from(r32.f_value);
        assert!(
            (r64.f_value - f32v).abs() <= 1e-3 * (1.0 + r64.f_value.abs()),
            "round {}",
            r64.k
        );
    }
}

#[test]
fn oversized_step_is_flagged_as_divergence() {
    let suite = quadratic(11, 3, 10, 0.5);
    let trace: RunTrace = run(
        &suite,
        &RunConfig::new(Algorithm::Dcgd, 50.0 / suite.l, 500, CompressorSpec::top_k(2)),
    )
    .unwrap();
    assert!(trace.diverged());
    assert!(trace.records.len() < 500);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn collapse_holds_for_random_suites(seed in 0u64..1000, n in 1usize..6, d in 2usize..12, step in 0.05f64..1.0) {
        let suite = quadratic(seed, n, d, 1.0);
        let gd: RunTrace = run(&suite, &RunConfig::new(Algorithm::Gd, step / suite.l, 30, CompressorSpec::Identity)).unwrap();
        let cafe: RunTrace = run(&suite, &RunConfig::new(Algorithm::Cafe, step / suite.l, 30, CompressorSpec::Identity)).unwrap();
        prop_assert_eq!(bits(&gd), bits(&cafe));
    }

    #[test]
    fn runs_are_reproducible(seed in 0u64..1000, k in 1usize..6) {
        let suite = quadratic(seed, 3, 8, 0.5);
        let config = RunConfig::new(Algorithm::Cafe, 0.5 / suite.l, 20, CompressorSpec::top_k(k)).with_seed(seed);
        let a: RunTrace = run(&suite, &config).unwrap();
        let b: RunTrace = run(&suite, &config).unwrap();
        prop_assert_eq!(bits(&a), bits(&b));
    }
}
