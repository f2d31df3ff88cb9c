use serde::{Deserialize, Serialize};

use super::{TheoremInputs, TheoryError, INEQUALITY_SLACK};
use crate::algorithms::{Algorithm, History, RunTrace};
use crate::linalg::{dot, inf_norm, norm_sq};
use crate::objectives::Objective;
use crate::scalar::Scalar;

/// Per-round `RHS − LHS` of an inequality, with the slack each round allows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResidualReport<T> {
    pub residuals: Vec<T>,
    pub tolerances: Vec<T>,
}

impl<T: Scalar> ResidualReport<T> {
    fn push(&mut self, residual: T, tolerance: T) {
        self.residuals.push(residual);
        self.tolerances.push(tolerance);
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    /// Rounds where the residual falls below `−tolerance`.
    pub fn violations(&self) -> Vec<usize> {
        self.residuals
            .iter()
            .zip(&self.tolerances)
            .enumerate()
            .filter(|(_, (&r, &t))| !(r >= -t))
            .map(|(k, _)| k)
            .collect()
    }

    pub fn holds(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn min_residual(&self) -> Option<T> {
        self.residuals.iter().copied().reduce(T::min)
    }
}

fn history<T>(trace: &RunTrace<T>) -> Result<&History<T>, TheoryError> {
    if trace.config.local_steps != 1 {
        return Err(TheoryError::LocalSteps(trace.config.local_steps));
    }
    trace.history.as_ref().ok_or(TheoryError::MissingHistory)
}

fn require_cafe<T>(trace: &RunTrace<T>) -> Result<(), TheoryError> {
    match trace.config.algorithm {
        Algorithm::Cafe => Ok(()),
        other => Err(TheoryError::RequiresCafe(other)),
    }
}

/// `g^k = −Δ_s^k / γ`, so that `x^{k+1} = x^k − γ g^k`.
fn directions<T: Scalar>(h: &History<T>, gamma: T) -> Vec<Vec<T>> {
    h.aggregates
        .iter()
        .map(|a| a.iter().map(|&v| -v / gamma).collect())
        .collect()
}

fn gradients<T: Scalar, O: Objective<T>>(objective: &O, h: &History<T>) -> Vec<Vec<T>> {
    h.iterates.iter().map(|x| objective.gradient(x)).collect()
}

fn slack<T: Scalar>(terms: &[T]) -> T {
    T::lit(INEQUALITY_SLACK) * terms.iter().fold(T::zero(), |acc, t| acc + t.abs())
}

/// `‖x^{k+1} − (x^k − γ(∇f(x^k) + ē^k))‖_∞` for every recorded round.
pub fn check_reconstruction<T: Scalar, O: Objective<T>>(
    trace: &RunTrace<T>,
    objective: &O,
) -> Result<Vec<T>, TheoryError> {
    let h = history(trace)?;
    let gamma = T::lit(trace.config.gamma);
    Ok((0..h.aggregates.len())
        .map(|k| {
            let g = objective.gradient(&h.iterates[k]);
            let predicted: Vec<T> = h.iterates[k]
                .iter()
                .zip(&g)
                .zip(&h.errors[k])
                .map(|((&x, &gi), &e)| x - gamma * (gi + e))
                .collect();
            let diff: Vec<T> = h.iterates[k + 1].iter().zip(&predicted).map(|(&a, &b)| a - b).collect();
            inf_norm(&diff)
        })
        .collect())
}

/// `f(x^{k+1}) ≤ f(x^k) − (γ/2)‖∇f(x^k)‖² + (γ/2)‖∇f(x^k) − g^k‖²
/// − (1/(2γ) − L/2)‖x^{k+1} − x^k‖²`, evaluated whatever `γ` is; the slack
/// is `1e−9·(1 + |f(x^k)|)`.
pub fn check_descent_recursion<T: Scalar, O: Objective<T>>(
    trace: &RunTrace<T>,
    objective: &O,
    gamma: T,
    l: T,
) -> Result<ResidualReport<T>, TheoryError> {
    let h = history(trace)?;
    let dirs = directions(h, gamma);
    let half = T::lit(0.5);
    let mut out = ResidualReport::default();
    for (k, g) in dirs.iter().enumerate() {
        let (x, x1) = (&h.iterates[k], &h.iterates[k + 1]);
        let grad = objective.gradient(x);
        let f = objective.value(x);
        let f1 = objective.value(x1);
        let gap: Vec<T> = grad.iter().zip(g).map(|(&a, &b)| a - b).collect();
        let step: Vec<T> = x1.iter().zip(x).map(|(&a, &b)| a - b).collect();
        let rhs = f - half * gamma * norm_sq(&grad) + half * gamma * norm_sq(&gap)
            - (half / gamma - half * l) * norm_sq(&step);
        out.push(rhs - f1, T::lit(INEQUALITY_SLACK) * (T::one() + f.abs()));
    }
    Ok(out)
}

/// `−⟨∇f(x^{k+1}), g^k⟩ ≤ −⟨∇f(x^k), g^k⟩ + γL‖g^k‖²`, slack
/// `1e−9·(1 + ‖g^k‖²)`.
pub fn check_lemma1<T: Scalar, O: Objective<T>>(
    trace: &RunTrace<T>,
    objective: &O,
    gamma: T,
    l: T,
) -> Result<ResidualReport<T>, TheoryError> {
    let h = history(trace)?;
    let dirs = directions(h, gamma);
    let grads = gradients(objective, h);
    let mut out = ResidualReport::default();
    for (k, g) in dirs.iter().enumerate() {
        let g2 = norm_sq(g);
        let lhs = -dot(&grads[k + 1], g);
        let rhs = -dot(&grads[k], g) + gamma * l * g2;
        out.push(rhs - lhs, T::lit(INEQUALITY_SLACK) * (T::one() + g2));
    }
    Ok(out)
}

/// `‖ē^{k+1}‖² ≤ ω(B²‖∇f(x^{k+1})‖² − ‖∇f(x^k)‖²) + 2γωL‖g^k‖² + ω‖ē^k‖²`
/// for `k = 0 … K−2`, with slack relative to the magnitudes of all terms.
pub fn check_lemma2<T: Scalar, O: Objective<T>>(
    trace: &RunTrace<T>,
    objective: &O,
    inputs: &TheoremInputs<T>,
) -> Result<ResidualReport<T>, TheoryError> {
    require_cafe(trace)?;
    let h = history(trace)?;
    let TheoremInputs {
        l, b2, omega, gamma, ..
    } = *inputs;
    let dirs = directions(h, gamma);
    let grads = gradients(objective, h);
    let two = T::lit(2.0);
    let mut out = ResidualReport::default();
    for k in 0..h.errors.len().saturating_sub(1) {
        let lhs = norm_sq(&h.errors[k + 1]);
        let terms = [
            omega * b2 * norm_sq(&grads[k + 1]),
            -omega * norm_sq(&grads[k]),
            two * gamma * omega * l * norm_sq(&dirs[k]),
            omega * norm_sq(&h.errors[k]),
        ];
        let rhs = terms.iter().fold(T::zero(), |acc, &t| acc + t);
        out.push(rhs - lhs, slack(&terms) + T::lit(INEQUALITY_SLACK) * lhs);
    }
    Ok(out)
}

/// `‖∇f(x)‖² ≤ 2L(f(x) − f*)` at every point, absolute slack 1e−9.
pub fn check_lemma3<T: Scalar, O: Objective<T>>(
    objective: &O,
    l: T,
    f_star: T,
    points: &[Vec<T>],
) -> ResidualReport<T> {
    let mut out = ResidualReport::default();
    for x in points {
        let g2 = norm_sq(&objective.gradient(x));
        let rhs = T::lit(2.0) * l * (objective.value(x) - f_star);
        out.push(rhs - g2, T::lit(INEQUALITY_SLACK));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialReport<T> {
    /// `Ψ^k = f(x^k) + γ/(2(1−ω))·‖ē^k‖²` per recorded round.
    pub psi: Vec<T>,
    /// One-step decrease of Ψ; present only when `γ` is admissible.
    pub decrease: Option<ResidualReport<T>>,
}

/// `Ψ^{k+1} ≤ Ψ^k − (γ/2)(1 + ω/(1−ω))‖∇f(x^k)‖² + (γ/2)(ωB²/(1−ω))‖∇f(x^{k+1})‖²`
/// is checked when `γ ≤ (1−ω)/(L(1+ω))`. Uses the recorded scalars only.
///
/// Besides the relative slack, each round allows `ε·|Ψ^0|`: once the steps
/// fall below the spacing of floating-point numbers around `x`, the stored
/// step is no longer exactly `−γ g^k` and the chain loses a few ulps of the
/// starting scale.
pub fn potential_trace<T: Scalar>(
    trace: &RunTrace<T>,
    inputs: &TheoremInputs<T>,
) -> Result<PotentialReport<T>, TheoryError> {
    require_cafe(trace)?;
    let TheoremInputs {
        l, b2, omega, gamma, ..
    } = *inputs;
    let one = T::one();
    let half = T::lit(0.5);
    let weight = gamma / (T::lit(2.0) * (one - omega));
    let psi: Vec<T> = trace
        .records
        .iter()
        .map(|r| r.f_value + weight * r.error_norm_sq)
        .collect();
    let cap = super::cafe_gamma_max(l, omega);
    let decrease = (trace.config.local_steps == 1 && gamma <= cap * (one + T::lit(1e-12))).then(|| {
        let mut out = ResidualReport::default();
        let floor = T::epsilon() * psi.first().map_or(T::zero(), |p| p.abs());
        for k in 0..psi.len().saturating_sub(1) {
            let (r, r1) = (&trace.records[k], &trace.records[k + 1]);
            let terms = [
                psi[k],
                -half * gamma * (one + omega / (one - omega)) * r.grad_norm_sq,
                half * gamma * (omega * b2 / (one - omega)) * r1.grad_norm_sq,
            ];
            let rhs = terms.iter().fold(T::zero(), |acc, &t| acc + t);
            out.push(
                rhs - psi[k + 1],
                slack(&terms) + T::lit(INEQUALITY_SLACK) * psi[k + 1].abs() + floor,
            );
        }
        out
    });
    Ok(PotentialReport { psi, decrease })
}
