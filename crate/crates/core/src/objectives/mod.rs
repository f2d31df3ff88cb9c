//! N-client objective suites `f = (1/N) Σ f_n` with oracles for gradients,
//! the optimal value, the smoothness constant L and the gradient
//! dissimilarity constant B².

mod io;
mod logistic;
mod quadratic;

use thiserror::Error;

use crate::linalg::{norm_sq, LinalgError};
use crate::scalar::Scalar;

pub use io::{read_suite, write_suite, SUITE_HEADER_BYTES, SUITE_MAGIC};
pub use logistic::{generate_logistic_suite, LogisticClient, LogisticParams, LogisticSuite};
pub use quadratic::{generate_quadratic_suite, QuadraticParams, QuadraticSuite};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("client index {index} out of range for {n_clients} clients")]
    IndexOutOfRange { index: usize, n_clients: usize },
    #[error("mean Hessian is singular (smallest eigenvalue {min_eig:e}); B² is unbounded")]
    SingularMean { min_eig: f64 },
    #[error("gradient norm squared {norm_sq:e} at point {index} is too small to form a dissimilarity ratio")]
    DegeneratePoint { index: usize, norm_sq: f64 },
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("optimal value not reached: gradient norm {grad_norm:e} after {iterations} iterations")]
    FStarNotReached { iterations: usize, grad_norm: f64 },
    #[error("malformed suite file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Oracle access to a finite-sum objective.
///
/// Client indices are assumed valid; [`ProblemSuite`] offers checked
/// wrappers.
pub trait Objective<T: Scalar>: Sync {
    fn n_clients(&self) -> usize;
    fn dim(&self) -> usize;
    fn client_value(&self, n: usize, x: &[T]) -> T;
    fn client_gradient(&self, n: usize, x: &[T]) -> Vec<T>;

    /// A minimizer, when known in closed form.
    fn known_minimizer(&self) -> Option<&[T]> {
        None
    }

    fn value(&self, x: &[T]) -> T {
        let n = self.n_clients();
        let total = (0..n).fold(T::zero(), |acc, i| acc + self.client_value(i, x));
        total / T::from_usize_lossy(n)
    }

    /// `(1/N) Σ ∇f_n(x)`, summed in ascending client order.
    fn gradient(&self, x: &[T]) -> Vec<T> {
        let n = self.n_clients();
        let mut acc = vec![T::zero(); self.dim()];
        for i in 0..n {
            let g = self.client_gradient(i, x);
            for (a, gi) in acc.iter_mut().zip(g) {
                *a = *a + gi;
            }
        }
        let nn = T::from_usize_lossy(n);
        acc.iter_mut().for_each(|a| *a = *a / nn);
        acc
    }

    /// `(1/N) Σ ‖∇f_n(x)‖²` together with `‖∇f(x)‖²`.
    fn dissimilarity_terms(&self, x: &[T]) -> (T, T) {
        let n = self.n_clients();
        let mut acc = vec![T::zero(); self.dim()];
        let mut local = T::zero();
        for i in 0..n {
            let g = self.client_gradient(i, x);
            local = local + norm_sq(&g);
            for (a, gi) in acc.iter_mut().zip(g) {
                *a = *a + gi;
            }
        }
        let nn = T::from_usize_lossy(n);
        acc.iter_mut().for_each(|a| *a = *a / nn);
        (local / nn, norm_sq(&acc))
    }
}

/// Either suite family.
#[derive(Debug, Clone)]
pub enum SuiteKind<T> {
    Quadratic(QuadraticSuite<T>),
    Logistic(LogisticSuite<T>),
}

/// A suite with its cached constants.
#[derive(Debug, Clone)]
pub struct ProblemSuite<T> {
    pub kind: SuiteKind<T>,
    /// Smoothness constant of the global objective.
    pub l: T,
    /// Dissimilarity constant; exact for quadratics, a sampled lower bound for
    /// logistic suites (see `b2_is_lower_bound`).
    pub b2: T,
    pub b2_is_lower_bound: bool,
    pub f_star: T,
}

impl<T: Scalar> ProblemSuite<T> {
    pub fn quadratic(suite: QuadraticSuite<T>) -> Result<Self, ObjectiveError> {
        let l = suite.smoothness_l()?;
        let b2 = suite.compute_b2()?;
        Ok(Self {
            kind: SuiteKind::Quadratic(suite),
            l,
            b2,
            b2_is_lower_bound: false,
            f_star: T::zero(),
        })
    }

    /// Computes L, f* (by gradient descent) and a sampled B² over
    /// `b2_samples` seeded standard-normal points.
    pub fn logistic(suite: LogisticSuite<T>, b2_samples: usize, seed: u64) -> Result<Self, ObjectiveError> {
        let l = suite.smoothness_l()?;
        let f_star = suite.f_star(l)?;
        let mut rng = crate::rng::stream(seed, "objectives/b2-points");
        let points: Vec<Vec<T>> = (0..b2_samples.max(1))
            .map(|_| crate::rng::normal_vector(&mut rng, suite.dim()))
            .collect();
        let b2 = estimate_b2_sampled(&suite, &points)?.max(T::one());
        Ok(Self {
            kind: SuiteKind::Logistic(suite),
            l,
            b2,
            b2_is_lower_bound: true,
            f_star,
        })
    }

    pub fn as_quadratic(&self) -> Option<&QuadraticSuite<T>> {
        match &self.kind {
            SuiteKind::Quadratic(q) => Some(q),
            SuiteKind::Logistic(_) => None,
        }
    }

    pub fn as_logistic(&self) -> Option<&LogisticSuite<T>> {
        match &self.kind {
            SuiteKind::Logistic(s) => Some(s),
            SuiteKind::Quadratic(_) => None,
        }
    }

    fn check_index(&self, n: usize) -> Result<(), ObjectiveError> {
        if n >= self.n_clients() {
            Err(ObjectiveError::IndexOutOfRange {
                index: n,
                n_clients: self.n_clients(),
            })
        } else {
            Ok(())
        }
    }

    pub fn grad_client(&self, n: usize, x: &[T]) -> Result<Vec<T>, ObjectiveError> {
        self.check_index(n)?;
        Ok(self.client_gradient(n, x))
    }

    pub fn value_client(&self, n: usize, x: &[T]) -> Result<T, ObjectiveError> {
        self.check_index(n)?;
        Ok(self.client_value(n, x))
    }
}

impl<T: Scalar> Objective<T> for ProblemSuite<T> {
    fn n_clients(&self) -> usize {
        match &self.kind {
            SuiteKind::Quadratic(q) => q.n_clients(),
            SuiteKind::Logistic(s) => s.n_clients(),
        }
    }

    fn dim(&self) -> usize {
        match &self.kind {
            SuiteKind::Quadratic(q) => q.dim(),
            SuiteKind::Logistic(s) => s.dim(),
        }
    }

    fn client_value(&self, n: usize, x: &[T]) -> T {
        match &self.kind {
            SuiteKind::Quadratic(q) => q.client_value(n, x),
            SuiteKind::Logistic(s) => s.client_value(n, x),
        }
    }

    fn client_gradient(&self, n: usize, x: &[T]) -> Vec<T> {
        match &self.kind {
            SuiteKind::Quadratic(q) => q.client_gradient(n, x),
            SuiteKind::Logistic(s) => s.client_gradient(n, x),
        }
    }

    fn known_minimizer(&self) -> Option<&[T]> {
        self.as_quadratic().map(|q| q.minimizer.as_slice())
    }
}

/// Largest observed `(1/N) Σ ‖∇f_n(x)‖² / ‖∇f(x)‖²` over `points`; a lower
/// bound on the true B².
pub fn estimate_b2_sampled<T: Scalar, O: Objective<T>>(objective: &O, points: &[Vec<T>]) -> Result<T, ObjectiveError> {
    if points.is_empty() {
        return Err(ObjectiveError::InvalidSuite(
            "B² estimate needs at least one point".into(),
        ));
    }
    let floor = T::lit(1e-20);
    let mut worst = T::zero();
    for (index, x) in points.iter().enumerate() {
        let (local, global) = objective.dissimilarity_terms(x);
        if global < floor {
            return Err(ObjectiveError::DegeneratePoint {
                index,
                norm_sq: global.to_f64_lossy(),
            });
        }
        worst = worst.max(local / global);
    }
    Ok(worst)
}
