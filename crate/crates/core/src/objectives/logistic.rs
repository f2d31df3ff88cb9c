use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Objective, ObjectiveError};
use crate::linalg::{norm, norm_sq, power_iteration, scale, Matrix};
use crate::rng::{normal_vector, standard_normal, stream};
use crate::scalar::Scalar;

/// One client's samples: rows of `features` with `±1` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticClient<T> {
    pub features: Matrix<T>,
    pub labels: Vec<T>,
}

/// `f_n(x) = (1/m_n) Σ log(1 + exp(−y aᵀx)) + (λ/2)‖x‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticSuite<T> {
    pub clients: Vec<LogisticClient<T>>,
    pub lambda: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub seed: u64,
    pub n_clients: usize,
    pub dim: usize,
    pub samples_per_client: usize,
    /// Probability that a sample carries its client's home label rather than a
    /// fair coin flip.
    pub label_skew: f64,
    pub lambda: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self {
            seed: 1,
            n_clients: 10,
            dim: 50,
            samples_per_client: 100,
            label_skew: 0.5,
            lambda: 1e-2,
        }
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus<T: Scalar>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> LogisticSuite<T> {
    pub fn new(clients: Vec<LogisticClient<T>>, lambda: T) -> Result<Self, ObjectiveError> {
        if clients.is_empty() {
            return Err(ObjectiveError::InvalidSuite("no clients".into()));
        }
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return Err(ObjectiveError::InvalidSuite(format!(
                "regularizer {lambda} must be finite and ≥ 0"
            )));
        }
        let d = clients[0].features.cols();
        if d == 0 {
            return Err(ObjectiveError::InvalidSuite("dimension is zero".into()));
        }
        for (n, c) in clients.iter().enumerate() {
            if c.features.cols() != d {
                return Err(ObjectiveError::InvalidSuite(format!(
                    "client {n}: feature width differs"
                )));
            }
            if c.features.rows() == 0 || c.features.rows() != c.labels.len() {
                return Err(ObjectiveError::InvalidSuite(format!(
                    "client {n}: {} feature rows, {} labels",
                    c.features.rows(),
                    c.labels.len()
                )));
            }
            if !c.features.as_slice().iter().all(|v| v.is_finite()) {
                return Err(ObjectiveError::InvalidSuite(format!(
                    "client {n}: features are not finite"
                )));
            }
            if !c.labels.iter().all(|&y| y == T::one() || y == -T::one()) {
                return Err(ObjectiveError::InvalidSuite(format!("client {n}: labels must be ±1")));
            }
        }
        Ok(Self { clients, lambda })
    }

    /// `(1/N) Σ λ_max(X_nᵀX_n) / (4 m_n) + λ`.
    pub fn smoothness_l(&self) -> Result<T, ObjectiveError> {
        let mut acc = T::zero();
        for c in &self.clients {
            let gram = c.features.transpose().matmul(&c.features);
            let top = power_iteration(&gram, T::lit(1e-10), 200_000)?.value;
            acc = acc + top / (T::lit(4.0) * T::from_usize_lossy(c.labels.len()));
        }
        Ok(acc / T::from_usize_lossy(self.clients.len()) + self.lambda)
    }

    /// Optimal value by full gradient descent with step `1/l` from the origin,
    /// stopping once `‖∇f‖ ≤ 1e−12`.
    pub fn f_star(&self, l: T) -> Result<T, ObjectiveError> {
        const MAX_ITER: usize = 200_000;
        let step = T::one() / l;
        let tol = T::lit(1e-12);
        let mut x = vec![T::zero(); self.dim()];
        let mut g = self.gradient(&x);
        for _ in 0..MAX_ITER {
            if norm(&g) <= tol {
                return Ok(self.value(&x));
            }
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi = *xi - step * *gi;
            }
            g = self.gradient(&x);
        }
        if norm(&g) <= tol {
            return Ok(self.value(&x));
        }
        Err(ObjectiveError::FStarNotReached {
            iterations: MAX_ITER,
            grad_norm: norm(&g).to_f64_lossy(),
        })
    }
}

impl<T: Scalar> Objective<T> for LogisticSuite<T> {
    fn n_clients(&self) -> usize {
        self.clients.len()
    }

    fn dim(&self) -> usize {
        self.clients[0].features.cols()
    }

    fn client_value(&self, n: usize, x: &[T]) -> T {
        let c = &self.clients[n];
        let margins = c.features.matvec(x);
        let loss = margins
            .iter()
            .zip(&c.labels)
            .fold(T::zero(), |acc, (&z, &y)| acc + softplus(-y * z));
        loss / T::from_usize_lossy(c.labels.len()) + T::lit(0.5) * self.lambda * norm_sq(x)
    }

    fn client_gradient(&self, n: usize, x: &[T]) -> Vec<T> {
        let c = &self.clients[n];
        let m = T::from_usize_lossy(c.labels.len());
        let weights: Vec<T> = c
            .features
            .matvec(x)
            .iter()
            .zip(&c.labels)
            .map(|(&z, &y)| -y * sigmoid(-y * z) / m)
            .collect();
        let mut g = c.features.matvec_transpose(&weights);
        for (gi, &xi) in g.iter_mut().zip(x) {
            *gi = *gi + self.lambda * xi;
        }
        g
    }
}

fn unit_direction<T: Scalar>(rng: &mut crate::rng::StreamRng, d: usize) -> Vec<T> {
    let raw: Vec<T> = normal_vector(rng, d);
    let r = norm(&raw);
    if r > T::zero() {
        scale(&raw, T::one() / r)
    } else {
        let mut e = vec![T::zero(); d];
        e[0] = T::one();
        e
    }
}

/// Class `+1` has mean `μ₊`, class `−1` has mean `μ₋`, drawn independently
/// with unit norm, plus unit Gaussian noise. Client `n` has home label `+1`
/// for even `n`, `−1` for odd `n`; each sample takes the home label with
/// probability `label_skew` and a fair coin otherwise.
pub fn generate_logistic_suite<T: Scalar>(p: &LogisticParams) -> LogisticSuite<T> {
    let (n_clients, d, m) = (p.n_clients.max(1), p.dim.max(1), p.samples_per_client.max(1));
    let skew = p.label_skew.clamp(0.0, 1.0);

    let mut rng = stream(p.seed, "logistic/class-mean");
    let mean_pos: Vec<T> = unit_direction(&mut rng, d);
    let mean_neg: Vec<T> = unit_direction(&mut rng, d);

    let clients = (0..n_clients)
        .map(|n| {
            let mut rng = stream(p.seed, &format!("logistic/client-{n}"));
            let home = if n % 2 == 0 { T::one() } else { -T::one() };
            let mut data = Vec::with_capacity(m * d);
            let mut labels = Vec::with_capacity(m);
            for _ in 0..m {
                let y = if rng.random::<f64>() < skew {
                    home
                } else if rng.random::<bool>() {
                    T::one()
                } else {
                    -T::one()
                };
                labels.push(y);
                let mean = if y > T::zero() { &mean_pos } else { &mean_neg };
                data.extend(mean.iter().map(|&mu| mu + standard_normal::<T>(&mut rng)));
            }
            LogisticClient {
                features: Matrix::from_row_major(m, d, data),
                labels,
            }
        })
        .collect();
    LogisticSuite {
        clients,
        lambda: T::lit(p.lambda.max(0.0)),
    }
}
