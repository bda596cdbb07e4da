//! Dense linear-algebra helpers: extreme eigenvalues of symmetric matrices
//! by power iteration, and symmetric positive-definite solves.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Settings for power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIteration {
    pub max_iters: usize,
    /// Relative residual tolerance: stop once `‖Av − θv‖ ≤ tol·|θ|`.
    pub tol: f64,
    /// Seed of the Gaussian start vector.
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-8,
            seed: 0x5eed,
        }
    }
}

impl PowerIteration {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// Outcome of a power iteration run.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vector,
    pub iterations: usize,
    pub converged: bool,
}

/// Dominant eigenpair of the symmetric positive semidefinite operator `apply`
/// acting on vectors of length `dim`.
pub fn power_iteration<F>(dim: usize, apply: F, opts: PowerIteration) -> Eigenpair
where
    F: Fn(&Vector) -> Vector,
{
    if dim == 0 {
        return Eigenpair {
            value: 0.0,
            vector: Vector::zeros(0),
            iterations: 0,
            converged: true,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let norm = v.norm();
    v /= norm;

    let mut theta = 0.0;
    for it in 1..=opts.max_iters {
        let w = apply(&v);
        theta = v.dot(&w);
        let wnorm = w.norm();
        if wnorm == 0.0 {
            // v lies in the null space; for a PSD operator started from a
            // Gaussian vector this means the operator is zero.
            return Eigenpair {
                value: 0.0,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
        let residual = (&w - &v * theta).norm();
        v = w / wnorm;
        if residual <= opts.tol * theta.abs() {
            return Eigenpair {
                value: theta,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
    }
    log::debug!(
        "power iteration hit {} iterations without meeting tol {:e}",
        opts.max_iters,
        opts.tol
    );
    Eigenpair {
        value: theta,
        vector: v,
        iterations: opts.max_iters,
        converged: false,
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix.
pub fn largest_eigenvalue(a: &Matrix, opts: PowerIteration) -> f64 {
    power_iteration(a.nrows(), |v| a * v, opts).value
}

/// Smallest eigenvalue of a symmetric positive semidefinite matrix.
///
/// Uses inverse iteration on a Cholesky factor when `a` is positive definite,
/// which keeps relative accuracy for tiny eigenvalues. Falls back to power
/// iteration on `λ_max·I − a` when the factorization fails.
pub fn smallest_eigenvalue(a: &Matrix, opts: PowerIteration) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        let inv = power_iteration(n, |v| chol.solve(v), opts);
        if inv.value > 0.0 && inv.value.is_finite() {
            return 1.0 / inv.value;
        }
    }
    let top = largest_eigenvalue(a, opts);
    let shifted = power_iteration(n, |v| v * top - a * v, opts);
    (top - shifted.value).max(0.0)
}

/// Operator norm of a symmetric (possibly indefinite) matrix.
pub fn symmetric_norm(a: &Matrix, opts: PowerIteration) -> f64 {
    power_iteration(a.nrows(), |v| a * (a * v), opts)
        .value
        .max(0.0)
        .sqrt()
}

/// Cholesky factorization with a descriptive error.
pub fn cholesky(a: Matrix) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a).ok_or_else(|| {
        Error::LinearSolve("matrix is not symmetric positive definite".to_string())
    })
}

/// Largest relative asymmetry `max |a_ij − a_ji| / max(1, max |a_ij|)`.
pub fn asymmetry(a: &Matrix) -> f64 {
    let scale = a.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

/// Replaces `a` by `(a + aᵀ)/2`.
pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn random_psd(n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        &g * g.transpose() + Matrix::identity(n, n) * 0.1
    }

    #[test]
    fn diagonal_extremes() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 3.0, 2.0]));
        let opts = PowerIteration::default();
        assert!((largest_eigenvalue(&a, opts) - 3.0).abs() < 1e-7);
        assert!((smallest_eigenvalue(&a, opts) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        let a = Matrix::zeros(4, 4);
        assert_eq!(largest_eigenvalue(&a, PowerIteration::default()), 0.0);
        assert_eq!(smallest_eigenvalue(&a, PowerIteration::default()), 0.0);
    }

    #[test]
    fn matches_dense_eigensolver() {
        for seed in 0..10 {
            let a = random_psd(12, seed);
            let eig = SymmetricEigen::new(a.clone());
            let hi = eig.eigenvalues.max();
            let lo = eig.eigenvalues.min();
            let opts = PowerIteration::default();
            let got_hi = largest_eigenvalue(&a, opts);
            let got_lo = smallest_eigenvalue(&a, opts);
            assert!((got_hi - hi).abs() <= 1e-6 * hi, "{got_hi} vs {hi}");
            assert!((got_lo - lo).abs() <= 1e-6 * lo, "{got_lo} vs {lo}");
        }
    }

    #[test]
    fn singular_matrix_falls_back_to_shift() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0]));
        let lo = smallest_eigenvalue(&a, PowerIteration::default());
        assert!(lo.abs() < 1e-7);
    }

    #[test]
    fn symmetric_norm_of_indefinite() {
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0, -4.0]));
        assert!((symmetric_norm(&a, PowerIteration::default()) - 4.0).abs() < 1e-7);
    }
}
