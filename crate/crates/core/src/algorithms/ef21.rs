use super::engine::{apply, dense_bytes, divergence_limit};
use super::{Algorithm, History, RoundRecord, RunConfig, RunError, RunStatus, RunTrace};
use crate::linalg::{is_finite, norm_sq};
use crate::objectives::Objective;
use crate::scalar::Scalar;

/// Single-client error feedback with a compressed control variate:
/// `g⁰ = C(∇f(x⁰))`, `x^{k+1} = x^k − γ g^k`,
/// `g^{k+1} = g^k + C(∇f(x^{k+1}) − g^k)`.
///
/// Written independently of the main engine so it can serve as an oracle for
/// the aggregated-feedback scheme at `N = 1`, where `g^k = −Δ_s^k / γ`. With
/// history enabled, `aggregates[k]` stores `−γ g^k` and `errors[k]` stores
/// `g^k − ∇f(x^k)`.
pub fn ef21_reference<T: Scalar, O: Objective<T>>(objective: &O, config: &RunConfig) -> Result<RunTrace<T>, RunError> {
    if config.algorithm != Algorithm::Ef21 {
        return Err(RunError::WrongAlgorithm {
            requested: config.algorithm,
            called: "ef21_reference",
        });
    }
    if objective.n_clients() != 1 {
        return Err(RunError::RequiresSingleClient(objective.n_clients()));
    }
    let d = objective.dim();
    config.validate(d)?;
    let spec = &config.compressor;
    let gamma = T::lit(config.gamma);
    let x0 = config.initial_point(objective);
    let limit = divergence_limit(objective.value(&x0));
    let mut history = config.record_history.then(|| History {
        iterates: vec![x0.clone()],
        ..History::default()
    });

    let mut x = x0.clone();
    let mut grad = objective.client_gradient(0, &x);
    let (mut g, first_bytes) = if spec.is_identity() {
        (grad.clone(), dense_bytes(d))
    } else {
        apply(spec, &grad, config.wire_rounding)?
    };
    let mut pending_bytes = first_bytes;
    let mut uplink = 0u64;
    let mut downlink = 0u64;
    let mut records = Vec::with_capacity(config.rounds);
    let mut status = RunStatus::Completed;

    for k in 0..config.rounds {
        let f_value = objective.value(&x);
        if !f_value.is_finite() || !is_finite(&x) || !is_finite(&g) || f_value > limit {
            status = RunStatus::Diverged {
                round: k,
                reason: format!("f(x^k) = {f_value:e} left the admissible range"),
            };
            break;
        }
        let error: Vec<T> = g.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        uplink += pending_bytes;
        downlink += dense_bytes(d);
        let e2 = norm_sq(&error);
        records.push(RoundRecord {
            k,
            grad_norm_sq: norm_sq(&grad),
            f_value,
            error_norm_sq: e2,
            client_error_mean: e2,
            client_error_max: e2,
            uplink_bytes_total: uplink,
            downlink_bytes_total: downlink,
        });

        for (xi, &gi) in x.iter_mut().zip(&g) {
            *xi = *xi - gamma * gi;
        }
        if let Some(h) = history.as_mut() {
            h.iterates.push(x.clone());
            h.aggregates.push(g.iter().map(|&gi| -gamma * gi).collect());
            h.errors.push(error);
        }

        grad = objective.client_gradient(0, &x);
        let residual: Vec<T> = grad.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let step = if spec.is_identity() {
            Ok((residual, dense_bytes(d)))
        } else {
            apply(spec, &residual, config.wire_rounding)
        };
        match step {
            Ok((c, bytes)) => {
                for (gi, ci) in g.iter_mut().zip(c) {
                    *gi = *gi + ci;
                }
                pending_bytes = bytes;
            }
            Err(crate::compressors::CompressError::NonFinite(i)) => {
                status = RunStatus::Diverged {
                    round: k + 1,
                    reason: format!("non-finite entry {i} in the control-variate update"),
                };
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }

    let final_f_value = objective.value(&x);
    let final_grad_norm_sq = norm_sq(&objective.gradient(&x));
    Ok(RunTrace {
        config: config.clone(),
        records,
        status,
        x0,
        final_x: x,
        final_f_value,
        final_grad_norm_sq,
        history,
    })
}
