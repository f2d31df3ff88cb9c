use serde::{Deserialize, Serialize};

use super::{Objective, ObjectiveError};
use crate::linalg::{dot, orthonormalize_columns, power_iteration, sub, Matrix, SymmetricEigen};
use crate::rng::{normal_vector, stream};
use crate::scalar::Scalar;

/// Clients `f_n(x) = ½ (x − x*)ᵀ H_n (x − x*)` sharing the minimizer `x*`.
#[derive(Debug, Clone)]
pub struct QuadraticSuite<T> {
    pub hessians: Vec<Matrix<T>>,
    pub minimizer: Vec<T>,
    mean_hessian: Matrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticParams {
    pub seed: u64,
    pub n_clients: usize,
    pub dim: usize,
    /// Spread of the shared base spectrum, `[1, kappa]`.
    pub kappa: f64,
    /// Per-eigenvalue multiplicative perturbation `exp(h·u)`, `u ~ U[−1, 1]`.
    pub heterogeneity: f64,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self {
            seed: 1,
            n_clients: 10,
            dim: 400,
            kappa: 100.0,
            heterogeneity: 0.5,
        }
    }
}

fn mean_of<T: Scalar>(hessians: &[Matrix<T>], d: usize) -> Matrix<T> {
    let mut mean = Matrix::zeros(d, d);
    for h in hessians {
        mean.add_assign(h);
    }
    mean.scaled(T::one() / T::from_usize_lossy(hessians.len()))
}

impl<T: Scalar> QuadraticSuite<T> {
    /// Validates that every Hessian is square, symmetric and PSD within 1e−10
    /// (relative to its scale).
    pub fn new(hessians: Vec<Matrix<T>>, minimizer: Vec<T>) -> Result<Self, ObjectiveError> {
        let d = minimizer.len();
        if hessians.is_empty() {
            return Err(ObjectiveError::InvalidSuite("no clients".into()));
        }
        if d == 0 {
            return Err(ObjectiveError::InvalidSuite("dimension is zero".into()));
        }
        if !minimizer.iter().all(|v| v.is_finite()) {
            return Err(ObjectiveError::InvalidSuite("minimizer is not finite".into()));
        }
        let tol = T::lit(1e-10);
        for (n, h) in hessians.iter().enumerate() {
            if h.rows() != d || h.cols() != d {
                return Err(ObjectiveError::InvalidSuite(format!(
                    "client {n}: Hessian is {}x{}, expected {d}x{d}",
                    h.rows(),
                    h.cols()
                )));
            }
            if !h.as_slice().iter().all(|v| v.is_finite()) {
                return Err(ObjectiveError::InvalidSuite(format!(
                    "client {n}: Hessian is not finite"
                )));
            }
            let scale = T::one() + h.as_slice().iter().fold(T::zero(), |m, v| m.max(v.abs()));
            if h.asymmetry() > tol * scale {
                return Err(ObjectiveError::InvalidSuite(format!(
                    "client {n}: Hessian is not symmetric"
                )));
            }
            let min_eig = SymmetricEigen::new(h)?.min_value();
            if min_eig < -tol * scale {
                return Err(ObjectiveError::InvalidSuite(format!(
                    "client {n}: Hessian has negative eigenvalue {min_eig:e}"
                )));
            }
        }
        Ok(Self::assemble(hessians, minimizer))
    }

    fn assemble(hessians: Vec<Matrix<T>>, minimizer: Vec<T>) -> Self {
        let mean_hessian = mean_of(&hessians, minimizer.len());
        Self {
            hessians,
            minimizer,
            mean_hessian,
        }
    }

    pub fn mean_hessian(&self) -> &Matrix<T> {
        &self.mean_hessian
    }

    /// `λ_max(H̄)` by power iteration to 1e−10 relative residual.
    pub fn smoothness_l(&self) -> Result<T, ObjectiveError> {
        Ok(power_iteration(&self.mean_hessian, T::lit(1e-10), 200_000)?.value)
    }

    /// Largest eigenvalue of the pencil `((1/N) Σ H_n², H̄²)`, i.e. of
    /// `H̄⁻¹ ((1/N) Σ H_n²) H̄⁻¹`. This is the supremum over x of the
    /// dissimilarity ratio because every gradient is linear in `x − x*`.
    pub fn compute_b2(&self) -> Result<T, ObjectiveError> {
        let d = self.minimizer.len();
        let eig = SymmetricEigen::new(&self.mean_hessian)?;
        let identical = self.hessians.iter().all(|h| *h == self.hessians[0]);
        let (lo, hi) = (eig.min_value(), eig.max_value());
        if !(hi > T::zero()) || lo <= hi * T::lit(1e-12) {
            return Err(ObjectiveError::SingularMean {
                min_eig: lo.to_f64_lossy(),
            });
        }
        if identical {
            return Ok(T::one());
        }
        let whiten = eig.map_spectrum(|l| T::one() / l);
        let mut second = Matrix::zeros(d, d);
        for h in &self.hessians {
            second.add_assign(&h.matmul(h));
        }
        let second = second.scaled(T::one() / T::from_usize_lossy(self.hessians.len()));
        let mut c = whiten.matmul(&second).matmul(&whiten);
        c.symmetrize();
        let b2 = SymmetricEigen::new(&c)?.max_value();
        Ok(b2.max(T::one()))
    }
}

impl<T: Scalar> Objective<T> for QuadraticSuite<T> {
    fn n_clients(&self) -> usize {
        self.hessians.len()
    }

    fn dim(&self) -> usize {
        self.minimizer.len()
    }

    fn client_value(&self, n: usize, x: &[T]) -> T {
        let r = sub(x, &self.minimizer);
        T::lit(0.5) * dot(&r, &self.hessians[n].matvec(&r))
    }

    fn client_gradient(&self, n: usize, x: &[T]) -> Vec<T> {
        self.hessians[n].matvec(&sub(x, &self.minimizer))
    }

    fn known_minimizer(&self) -> Option<&[T]> {
        Some(&self.minimizer)
    }
}

/// `H_n = Q Λ_n Qᵀ` with a shared random orthogonal `Q`. The base spectrum is
/// log-uniform on `[1, kappa]` with both endpoints present (for `d ≥ 2`);
/// client `n` scales eigenvalue `i` by `exp(heterogeneity · u_{n,i})`.
pub fn generate_quadratic_suite<T: Scalar>(p: &QuadraticParams) -> QuadraticSuite<T> {
    let (n_clients, d) = (p.n_clients.max(1), p.dim.max(1));
    let kappa = p.kappa.max(1.0);

    let mut rng = stream(p.seed, "quadratic/basis");
    let gauss = Matrix::from_row_major(d, d, normal_vector::<T>(&mut rng, d * d));
    let q = orthonormalize_columns(&gauss);

    let mut rng = stream(p.seed, "quadratic/spectrum");
    let base: Vec<f64> = (0..d)
        .map(|i| {
            let u = if i == 0 {
                0.0
            } else if i == d - 1 {
                1.0
            } else {
                rand::Rng::random::<f64>(&mut rng)
            };
            kappa.powf(u)
        })
        .collect();

    let mut rng = stream(p.seed, "quadratic/heterogeneity");
    let hessians = (0..n_clients)
        .map(|_| {
            let spectrum: Vec<T> = base
                .iter()
                .map(|&l| {
                    let u: f64 = rand::Rng::random_range(&mut rng, -1.0..=1.0);
                    T::lit(l * (p.heterogeneity * u).exp())
                })
                .collect();
            let mut scaled_q = q.clone();
            for i in 0..d {
                for (j, &s) in spectrum.iter().enumerate() {
                    scaled_q[(i, j)] = scaled_q[(i, j)] * s;
                }
            }
            let mut h = scaled_q.matmul(&q.transpose());
            h.symmetrize();
            h
        })
        .collect();

    let mut rng = stream(p.seed, "quadratic/minimizer");
    let minimizer = normal_vector::<T>(&mut rng, d);
    QuadraticSuite::assemble(hessians, minimizer)
}
