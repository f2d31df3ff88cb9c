use rayon::prelude::*;

use super::{Algorithm, History, RoundRecord, RunConfig, RunError, RunStatus, RunTrace};
use crate::compressors::{encode_exact, reconstruct, CompressError, CompressorSpec, HEADER_BYTES};
use crate::linalg::{is_finite, norm_sq};
use crate::objectives::Objective;
use crate::scalar::Scalar;

/// Size of an uncompressed `d`-vector message.
pub(super) fn dense_bytes(d: usize) -> u64 {
    (HEADER_BYTES + 4 * d) as u64
}

/// What one client hands to the server in one round.
struct ClientOutput<T> {
    gradient: Vec<T>,
    contribution: Vec<T>,
    error: Vec<T>,
    error_norm_sq: T,
    bytes: u64,
}

/// Applies the compressor to `u`, returning the decoded vector and wire size.
pub(super) fn apply<T: Scalar>(
    spec: &CompressorSpec,
    u: &[T],
    wire_rounding: bool,
) -> Result<(Vec<T>, u64), CompressError> {
    let msg = encode_exact(spec, u)?;
    let bytes = msg.byte_size() as u64;
    let c = if wire_rounding {
        reconstruct(&msg.map_values(T::to_f32_lossy).map_values(T::from_wire))
    } else {
        reconstruct(&msg)
    };
    Ok((c, bytes))
}

/// `Δ_n = −γ Σ_j ∇f_n(x_n^j)` over `steps` local gradient steps, together
/// with `∇f_n(x)` at the starting point.
fn local_update<T: Scalar, O: Objective<T>>(
    objective: &O,
    n: usize,
    x: &[T],
    gamma: T,
    steps: usize,
) -> (Vec<T>, Vec<T>) {
    let g0 = objective.client_gradient(n, x);
    let mut delta: Vec<T> = g0.iter().map(|&g| -gamma * g).collect();
    for _ in 1..steps {
        let xn: Vec<T> = x.iter().zip(&delta).map(|(&a, &b)| a + b).collect();
        let g = objective.client_gradient(n, &xn);
        for (d, gi) in delta.iter_mut().zip(g) {
            *d = *d - gamma * gi;
        }
    }
    (g0, delta)
}

struct Round<'a, T> {
    algorithm: Algorithm,
    spec: &'a CompressorSpec,
    gamma: T,
    steps: usize,
    wire_rounding: bool,
    x: &'a [T],
    previous: &'a [T],
}

impl<T: Scalar> Round<'_, T> {
    fn client<O: Objective<T>>(&self, objective: &O, n: usize) -> Result<ClientOutput<T>, CompressError> {
        let d = self.x.len();
        let (gradient, delta) = local_update(objective, n, self.x, self.gamma, self.steps);
        let lossless = self.algorithm == Algorithm::Gd || self.spec.is_identity();
        if lossless {
            return Ok(ClientOutput {
                gradient,
                contribution: delta,
                error: vec![T::zero(); d],
                error_norm_sq: T::zero(),
                bytes: dense_bytes(d),
            });
        }
        let feedback = self.algorithm == Algorithm::Cafe;
        let u: Vec<T> = if feedback {
            delta.iter().zip(self.previous).map(|(&a, &b)| a - b).collect()
        } else {
            delta
        };
        let (c, bytes) = apply(self.spec, &u, self.wire_rounding)?;
        let error: Vec<T> = u.iter().zip(&c).map(|(&ui, &ci)| (ui - ci) / self.gamma).collect();
        let error_norm_sq = norm_sq(&error);
        let contribution = if feedback {
            c.iter().zip(self.previous).map(|(&a, &b)| a + b).collect()
        } else {
            c
        };
        Ok(ClientOutput {
            gradient,
            contribution,
            error,
            error_norm_sq,
            bytes,
        })
    }
}

/// Ascending-order mean of equally sized vectors.
fn mean_of<T: Scalar>(vs: impl Iterator<Item = impl AsRef<[T]>>, d: usize, n: usize) -> Vec<T> {
    let mut acc = vec![T::zero(); d];
    for v in vs {
        for (a, &b) in acc.iter_mut().zip(v.as_ref()) {
            *a = *a + b;
        }
    }
    let nn = T::from_usize_lossy(n);
    acc.iter_mut().for_each(|a| *a = *a / nn);
    acc
}

pub(super) fn divergence_limit<T: Scalar>(f0: T) -> T {
    T::lit(1e12) * (T::one() + f0.abs())
}

pub(super) fn run<T: Scalar, O: Objective<T>>(objective: &O, config: &RunConfig) -> Result<RunTrace<T>, RunError> {
    let d = objective.dim();
    let n_clients = objective.n_clients();
    config.validate(d)?;
    let gamma = T::lit(config.gamma);
    let x0 = config.initial_point(objective);
    let mut x = x0.clone();
    let mut previous = vec![T::zero(); d];
    let limit = divergence_limit(objective.value(&x0));
    let keep = config.record_history;
    let mut history = keep.then(|| History {
        iterates: vec![x0.clone()],
        ..History::default()
    });

    let per_round_down = dense_bytes(d)
        + if config.algorithm == Algorithm::Cafe && !config.stateful_clients {
            4 * d as u64
        } else {
            0
        };
    let mut uplink = 0u64;
    let mut downlink = 0u64;
    let mut records = Vec::with_capacity(config.rounds);
    let mut status = RunStatus::Completed;

    for k in 0..config.rounds {
        let f_value = objective.value(&x);
        if !f_value.is_finite() || !is_finite(&x) || f_value > limit {
            status = RunStatus::Diverged {
                round: k,
                reason: format!("f(x^k) = {f_value:e} left the admissible range"),
            };
            break;
        }
        let round = Round {
            algorithm: config.algorithm,
            spec: &config.compressor,
            gamma,
            steps: config.local_steps,
            wire_rounding: config.wire_rounding,
            x: &x,
            previous: &previous,
        };
        let outputs: Result<Vec<ClientOutput<T>>, CompressError> = if config.parallel {
            (0..n_clients)
                .into_par_iter()
                .map(|n| round.client(objective, n))
                .collect()
        } else {
            (0..n_clients).map(|n| round.client(objective, n)).collect()
        };
        let outputs = match outputs {
            Ok(o) => o,
            Err(CompressError::NonFinite(i)) => {
                status = RunStatus::Diverged {
                    round: k,
                    reason: format!("non-finite entry {i} in a client update"),
                };
                break;
            }
            Err(e) => return Err(e.into()),
        };

        let gradient = mean_of(outputs.iter().map(|o| o.gradient.as_slice()), d, n_clients);
        let aggregate = mean_of(outputs.iter().map(|o| o.contribution.as_slice()), d, n_clients);
        let error = mean_of(outputs.iter().map(|o| o.error.as_slice()), d, n_clients);
        let client_error_mean =
            outputs.iter().fold(T::zero(), |a, o| a + o.error_norm_sq) / T::from_usize_lossy(n_clients);
        let client_error_max = outputs.iter().fold(T::zero(), |a, o| a.max(o.error_norm_sq));
        uplink += outputs.iter().map(|o| o.bytes).sum::<u64>();
        downlink += per_round_down;

        records.push(RoundRecord {
            k,
            grad_norm_sq: norm_sq(&gradient),
            f_value,
            error_norm_sq: norm_sq(&error),
            client_error_mean,
            client_error_max,
            uplink_bytes_total: uplink,
            downlink_bytes_total: downlink,
        });

        for (xi, &a) in x.iter_mut().zip(&aggregate) {
            *xi = *xi + a;
        }
        if let Some(h) = history.as_mut() {
            h.iterates.push(x.clone());
            h.aggregates.push(aggregate.clone());
            h.errors.push(error);
        }
        previous = aggregate;
    }

    let final_f_value = objective.value(&x);
    let final_grad_norm_sq = norm_sq(&objective.gradient(&x));
    if matches!(status, RunStatus::Completed) && (!final_f_value.is_finite() || final_f_value > limit) {
        status = RunStatus::Diverged {
            round: config.rounds,
            reason: format!("final f = {final_f_value:e} left the admissible range"),
        };
    }
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
