//! Synthetic quadratic problems with prescribed similarity δ and smoothness L.
//!
//! In the direct-Hessian mode the client Hessians are `H_m = H̄ + δ·S_m`,
//! where the directions come in `±` pairs (so `Σ S_m = 0`) and are scaled so
//! that `λ_max((1/M)Σ S_m²) = 1`. The measured constant is then `δ` itself.
//! `H̄` has log-spaced eigenvalues ending at `L` in a random basis, with its
//! bottom eigenvalue raised far enough that every `H_m ⪰ λI`.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Matrix, Vector};
use crate::problem::{ClientObjective, FederatedProblem, Regularizer};

/// Largest dimension for which dense Hessians are materialized.
pub const MAX_DENSE_DIM: usize = 512;

/// Parameters of a generated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_clients: usize,
    pub dim: usize,
    /// Target similarity constant δ.
    pub delta: f64,
    /// Target smoothness `λ_max(H̄)`.
    pub smoothness: f64,
    /// Lower bound on every client's strong convexity.
    pub lambda: f64,
    /// Spread of client minimizers around the planted point.
    pub noise_std: f64,
    /// `None` builds Hessians directly; `Some(n)` draws `n` data vectors per
    /// client and builds ridge clients whose δ is measured, not targeted.
    pub samples_per_client: Option<usize>,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Infeasible(msg));
        if self.num_clients == 0 || self.dim == 0 {
            return bad("need at least one client and one dimension".into());
        }
        if self.dim > MAX_DENSE_DIM {
            return bad(format!("dimension {} exceeds the dense limit {MAX_DENSE_DIM}", self.dim));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("λ={} must be positive", self.lambda));
        }
        if !(self.delta >= 0.0 && self.smoothness.is_finite() && self.delta.is_finite()) {
            return bad(format!("δ={} must be ≥ 0", self.delta));
        }
        if self.delta > self.smoothness {
            return bad(format!("δ={} exceeds L={}", self.delta, self.smoothness));
        }
        if self.smoothness < self.lambda {
            return bad(format!("L={} is below λ={}", self.smoothness, self.lambda));
        }
        if self.num_clients < 2 && self.delta > 0.0 {
            return bad("a nonzero δ needs at least two clients".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std={} must be ≥ 0", self.noise_std));
        }
        if self.samples_per_client == Some(0) {
            return bad("samples_per_client must be positive".into());
        }
        Ok(())
    }
}

fn gaussian_vector<R: Rng>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

fn gaussian_matrix<R: Rng>(r: usize, c: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

/// Haar-like random orthogonal matrix from the QR factor of a Gaussian.
fn random_orthogonal<R: Rng>(d: usize, rng: &mut R) -> Matrix {
    let qr = gaussian_matrix(d, d, rng).qr();
    let (mut q, r) = qr.unpack();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric Gaussian matrix `(G + Gᵀ)/2`.
fn random_symmetric<R: Rng>(d: usize, rng: &mut R) -> Matrix {
    let g = gaussian_matrix(d, d, rng);
    let mut s = (&g + g.transpose()) * 0.5;
    symmetrize(&mut s);
    s
}

/// `±` paired directions (the odd client gets zero) normalized so that
/// `λ_max((1/M)Σ S_m²) = 1`.
pub fn paired_directions<R: Rng>(num_clients: usize, dim: usize, rng: &mut R) -> Vec<Matrix> {
    let pairs = num_clients / 2;
    let mut raw: Vec<Matrix> = (0..pairs).map(|_| random_symmetric(dim, rng)).collect();
    if pairs == 0 {
        return vec![Matrix::zeros(dim, dim); num_clients];
    }
    let mut d = Matrix::zeros(dim, dim);
    for s in &raw {
        d.gemm(2.0 / num_clients as f64, s, s, 1.0);
    }
    symmetrize(&mut d);
    let top = SymmetricEigen::new(d).eigenvalues.max();
    let scale = 1.0 / top.sqrt();
    for s in &mut raw {
        *s *= scale;
    }
    let mut out = Vec::with_capacity(num_clients);
    for s in raw {
        out.push(-&s);
        out.push(s);
    }
    if num_clients % 2 == 1 {
        out.push(Matrix::zeros(dim, dim));
    }
    out
}

/// Builds `H_m = H̄ + δ·S_m` clients whose own minimizers are `minimizers[m]`
/// and whose minimum value is 0.
pub fn perturbed_problem(
    mean_hessian: &Matrix,
    directions: &[Matrix],
    delta: f64,
    minimizers: &[Vector],
) -> Result<FederatedProblem> {
    if directions.len() != minimizers.len() {
        return Err(Error::InvalidParameter(format!(
            "{} directions for {} minimizers",
            directions.len(),
            minimizers.len()
        )));
    }
    let clients = directions
        .iter()
        .zip(minimizers)
        .map(|(s, x)| {
            let mut h = mean_hessian + s * delta;
            symmetrize(&mut h);
            let hx = &h * x;
            let offset = 0.5 * x.dot(&hx);
            ClientObjective::quadratic(h, -hx).map(|c| c.with_offset(offset))
        })
        .collect::<Result<Vec<_>>>()?;
    FederatedProblem::new(clients, Regularizer::None)
}

/// Generates a problem from `spec`. Identical specs give bit-identical
/// problems.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FederatedProblem> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.samples_per_client {
        None => generate_direct(spec, &mut rng),
        Some(n) => generate_data_vectors(spec, n, &mut rng),
    }
}

fn generate_direct(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<FederatedProblem> {
    let (m, d) = (spec.num_clients, spec.dim);
    let directions = paired_directions(m, d, rng);
    let worst = directions
        .iter()
        .map(|s| {
            let e = SymmetricEigen::new(s.clone()).eigenvalues;
            e.max().abs().max(e.min().abs())
        })
        .fold(0.0, f64::max);
    let lo = spec.lambda + spec.delta * worst;
    if lo > spec.smoothness {
        return Err(Error::Infeasible(format!(
            "keeping every client {}-strongly convex needs λ_min(H̄) ≥ {lo:.4}, above L={}",
            spec.lambda, spec.smoothness
        )));
    }
    let eigs: Vec<f64> = (0..d)
        .map(|i| {
            if d == 1 {
                spec.smoothness
            } else {
                let t = i as f64 / (d - 1) as f64;
                lo * (spec.smoothness / lo).powf(t)
            }
        })
        .collect();
    let q = random_orthogonal(d, rng);
    let mut h_bar = &q * Matrix::from_diagonal(&Vector::from_vec(eigs)) * q.transpose();
    symmetrize(&mut h_bar);

    let planted = gaussian_vector(d, rng);
    let minimizers: Vec<Vector> = (0..m)
        .map(|_| &planted + gaussian_vector(d, rng) * spec.noise_std)
        .collect();
    perturbed_problem(&h_bar, &directions, spec.delta, &minimizers)
}

/// Data-vector mode: client `m` draws `z ~ N(0, Σ_m)` with
/// `Σ_m^{1/2} = A + ε_m B_m`, targets `y = zᵀx° + noise`, and becomes a
/// ridge client. The spread `ε_m` grows with `δ/L`; the resulting constants
/// are whatever the data give.
fn generate_data_vectors(
    spec: &SyntheticSpec,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<FederatedProblem> {
    let d = spec.dim;
    let planted = gaussian_vector(d, rng);
    // Shared covariance factor scaled so (2/n)E[ZᵀZ] has top eigenvalue ≈ L.
    let base = random_orthogonal(d, rng) * (spec.smoothness / 2.0).sqrt();
    let spread = if spec.smoothness > 0.0 { spec.delta / spec.smoothness } else { 0.0 };
    let clients = (0..spec.num_clients)
        .map(|_| {
            let factor = &base + random_symmetric(d, rng) * (spread * (spec.smoothness / 2.0).sqrt() / (d as f64).sqrt());
            let white = gaussian_matrix(n, d, rng);
            let z = white * factor.transpose();
            let noise = gaussian_vector(n, rng) * spec.noise_std;
            let y = &z * &planted + noise;
            ClientObjective::dataset_ridge(z, y, spec.lambda)
        })
        .collect::<Result<Vec<_>>>()?;
    FederatedProblem::new(clients, Regularizer::None)
}

/// Problem with a weakly convex direction that all clients share.
///
/// `H̄` has eigenvalue `μ` along one direction and values from `μ + δ` up to
/// `L` elsewhere; the client perturbations `±δ·S_m` are diagonal `±1` in the
/// same basis but vanish on the weak direction. So `δ` and `μ` are exact and
/// `δ/μ` alone sets how hard the problem is for SVRP.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakDirectionSpec {
    pub num_clients: usize,
    pub dim: usize,
    pub delta: f64,
    pub mu: f64,
    pub smoothness: f64,
    pub noise_std: f64,
    pub seed: u64,
}

pub fn generate_weak_direction(spec: &WeakDirectionSpec) -> Result<FederatedProblem> {
    let (m, d) = (spec.num_clients, spec.dim);
    if m < 2 || d < 2 {
        return Err(Error::Infeasible("need at least two clients and two dimensions".into()));
    }
    if d > MAX_DENSE_DIM {
        return Err(Error::Infeasible(format!("dimension {d} exceeds {MAX_DENSE_DIM}")));
    }
    for (name, v) in [("δ", spec.delta), ("μ", spec.mu), ("L", spec.smoothness)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Infeasible(format!("{name}={v} must be positive")));
        }
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::Infeasible(format!("noise_std={} must be ≥ 0", spec.noise_std)));
    }
    // With an odd M the unpaired client is zero; scale the rest to keep δ.
    let pairs = m / 2;
    let scale = (m as f64 / (2 * pairs) as f64).sqrt();
    let lo = spec.mu + spec.delta * scale;
    if lo > spec.smoothness {
        return Err(Error::Infeasible(format!(
            "μ + δ·{scale:.4} = {lo:.4} exceeds L={}",
            spec.smoothness
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let q = random_orthogonal(d, &mut rng);
    let rotate = |diag: Vector| {
        let mut a = &q * Matrix::from_diagonal(&diag) * q.transpose();
        symmetrize(&mut a);
        a
    };
    let eigs = Vector::from_fn(d, |i, _| match i {
        0 => spec.mu,
        _ if d == 2 => spec.smoothness,
        _ => lo * (spec.smoothness / lo).powf((i - 1) as f64 / (d - 2) as f64),
    });
    let h_bar = rotate(eigs);
    let mut directions = Vec::with_capacity(m);
    for _ in 0..pairs {
        let signs = Vector::from_fn(d, |i, _| {
            if i == 0 {
                0.0
            } else if rng.random::<bool>() {
                scale
            } else {
                -scale
            }
        });
        directions.push(rotate(signs.clone()));
        directions.push(rotate(-signs));
    }
    if m % 2 == 1 {
        directions.push(Matrix::zeros(d, d));
    }
    let planted = gaussian_vector(d, &mut rng);
    let minimizers: Vec<Vector> = (0..m)
        .map(|_| &planted + gaussian_vector(d, &mut rng) * spec.noise_std)
        .collect();
    perturbed_problem(&h_bar, &directions, spec.delta, &minimizers)
}
