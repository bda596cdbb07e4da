//! Client objectives, the federated finite-sum problem, and the analytic
//! constants (μ, L, δ, σ*², x*) that the parameter formulas consume.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::Cholesky;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    all_finite, asymmetry, cholesky, largest_eigenvalue, smallest_eigenvalue, Matrix,
    PowerIteration, Vector,
};

/// Relative symmetry tolerance for explicit Hessians.
const SYMMETRY_TOL: f64 = 1e-12;

/// A smooth client loss known only through value and gradient callbacks.
///
/// Algorithms accept such clients through the iterative prox oracles, but the
/// constants oracle and the exact prox require quadratic clients.
pub trait SmoothLoss: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
}

/// Samples of one client for least-squares regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeData {
    pub features: Matrix,
    pub labels: Vector,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
enum Loss {
    /// `½xᵀHx + cᵀx + offset`.
    Quadratic {
        hessian: Arc<Matrix>,
        linear: Vector,
        offset: f64,
    },
    /// `(1/n)‖Zx − y‖² + (λ/2)‖x‖²`, with the Hessian and linear term
    /// materialized for the oracles.
    Ridge {
        data: Arc<RidgeData>,
        hessian: Arc<Matrix>,
        linear: Vector,
    },
    Smooth(Arc<dyn SmoothLoss>),
}

/// Isotropic proximal term `(γ/2)‖x − center‖² + offset` added on top of a loss.
#[derive(Debug, Clone, PartialEq)]
struct Shift {
    gamma: f64,
    center: Vector,
    offset: f64,
}

/// One client's loss `f_m` together with its strong-convexity and
/// smoothness constants.
#[derive(Debug, Clone)]
pub struct ClientObjective {
    loss: Loss,
    shift: Option<Shift>,
    mu: f64,
    smoothness: f64,
}

/// Borrowed quadratic form of a client: `∇f(x) = (H + sI)x + c`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticView<'a> {
    pub hessian: &'a Arc<Matrix>,
    pub isotropic: f64,
    pub linear: &'a Vector,
    pub center_pull: Option<(f64, &'a Vector)>,
}

impl QuadraticView<'_> {
    /// Effective linear term `c − γ·center`.
    pub fn effective_linear(&self) -> Vector {
        match self.center_pull {
            Some((gamma, center)) => self.linear - center * gamma,
            None => self.linear.clone(),
        }
    }
}

/// Dimension up to which client spectra come from a dense eigensolve.
pub const DENSE_EIGEN_MAX_DIM: usize = 512;

/// `(λ_min, λ_max)` of a client Hessian.
fn spectrum(h: &Matrix) -> (f64, f64) {
    if h.nrows() <= DENSE_EIGEN_MAX_DIM {
        let eig = nalgebra::SymmetricEigen::new(h.clone());
        return (eig.eigenvalues.min().max(0.0), eig.eigenvalues.max());
    }
    let opts = PowerIteration::default();
    let lo = smallest_eigenvalue(h, opts).max(0.0);
    let hi = largest_eigenvalue(h, opts);
    (lo, hi)
}

impl ClientObjective {
    /// Explicit quadratic `f(x) = ½xᵀHx + cᵀx`.
    pub fn quadratic(hessian: Matrix, linear: Vector) -> Result<Self> {
        let d = hessian.nrows();
        check_dim(d, hessian.ncols())?;
        check_dim(d, linear.len())?;
        if !hessian.iter().all(|v| v.is_finite()) || !all_finite(&linear) {
            return Err(Error::InvalidParameter(
                "quadratic client has non-finite entries".into(),
            ));
        }
        if asymmetry(&hessian) > SYMMETRY_TOL {
            return Err(Error::InvalidParameter(format!(
                "Hessian is not symmetric (relative asymmetry {:e})",
                asymmetry(&hessian)
            )));
        }
        let (mu, smoothness) = spectrum(&hessian);
        Ok(Self {
            loss: Loss::Quadratic {
                hessian: Arc::new(hessian),
                linear,
                offset: 0.0,
            },
            shift: None,
            mu,
            smoothness,
        })
    }

    /// Adds a constant to the value of an explicit quadratic.
    pub fn with_offset(mut self, value: f64) -> Self {
        if let Loss::Quadratic { offset, .. } = &mut self.loss {
            *offset = value;
        }
        self
    }

    /// Ridge regression client `(1/n)Σ(zᵢᵀx − yᵢ)² + (λ/2)‖x‖²`.
    pub fn dataset_ridge(features: Matrix, labels: Vector, lambda: f64) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("ridge client with no samples".into()));
        }
        check_dim(n, labels.len())?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("ridge weight {lambda} < 0")));
        }
        let d = features.ncols();
        let scale = 2.0 / n as f64;
        let mut hessian = features.tr_mul(&features) * scale;
        for i in 0..d {
            hessian[(i, i)] += lambda;
        }
        crate::linalg::symmetrize(&mut hessian);
        let linear = features.tr_mul(&labels) * (-scale);
        let (mu, smoothness) = spectrum(&hessian);
        Ok(Self {
            loss: Loss::Ridge {
                data: Arc::new(RidgeData {
                    features,
                    labels,
                    lambda,
                }),
                hessian: Arc::new(hessian),
                linear,
            },
            shift: None,
            mu: mu.max(lambda),
            smoothness,
        })
    }

    /// Black-box smooth client with user-supplied constants.
    pub fn smooth(loss: Arc<dyn SmoothLoss>, mu: f64, smoothness: f64) -> Result<Self> {
        if !(mu >= 0.0 && smoothness >= mu && smoothness.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 ≤ μ ≤ L, got μ={mu}, L={smoothness}"
            )));
        }
        Ok(Self {
            loss: Loss::Smooth(loss),
            shift: None,
            mu,
            smoothness,
        })
    }

    /// Returns `f_m(x) + (γ/2)‖x − center‖²`.
    pub fn shifted(&self, gamma: f64, center: &Vector) -> Self {
        let shift = match &self.shift {
            None => Shift {
                gamma,
                center: center.clone(),
                offset: 0.0,
            },
            Some(old) => {
                let total = old.gamma + gamma;
                if total == 0.0 {
                    old.clone()
                } else {
                    let merged = (&old.center * old.gamma + center * gamma) / total;
                    let extra =
                        0.5 * old.gamma * gamma / total * (&old.center - center).norm_squared();
                    Shift {
                        gamma: total,
                        center: merged,
                        offset: old.offset + extra,
                    }
                }
            }
        };
        Self {
            loss: self.loss.clone(),
            shift: Some(shift),
            mu: self.mu + gamma,
            smoothness: self.smoothness + gamma,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.loss {
            Loss::Quadratic { linear, .. } | Loss::Ridge { linear, .. } => linear.len(),
            Loss::Smooth(l) => l.dim(),
        }
    }

    /// Strong-convexity constant `μ_m`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Smoothness constant `L_m = λ_max(∇²f_m)`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn is_quadratic(&self) -> bool {
        !matches!(self.loss, Loss::Smooth(_))
    }

    /// Ridge samples backing this client, if it was built from data.
    pub fn ridge_data(&self) -> Option<&RidgeData> {
        match &self.loss {
            Loss::Ridge { data, .. } => Some(data),
            _ => None,
        }
    }

    /// Borrowed quadratic form, or `None` for black-box clients.
    pub fn quadratic_view(&self) -> Option<QuadraticView<'_>> {
        let (hessian, linear) = match &self.loss {
            Loss::Quadratic {
                hessian, linear, ..
            }
            | Loss::Ridge {
                hessian, linear, ..
            } => (hessian, linear),
            Loss::Smooth(_) => return None,
        };
        Some(QuadraticView {
            hessian,
            isotropic: self.shift.as_ref().map_or(0.0, |s| s.gamma),
            linear,
            center_pull: self.shift.as_ref().map(|s| (s.gamma, &s.center)),
        })
    }

    /// Effective Hessian including any proximal shift.
    pub fn hessian(&self) -> Option<Matrix> {
        let view = self.quadratic_view()?;
        let mut h = (**view.hessian).clone();
        if view.isotropic != 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += view.isotropic;
            }
        }
        Some(h)
    }

    /// Effective linear term `c` such that `∇f(x) = Hx + c`.
    pub fn linear_term(&self) -> Option<Vector> {
        self.quadratic_view().map(|v| v.effective_linear())
    }

    /// `f_m(x)`.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        Ok(self.value_unchecked(x))
    }

    pub(crate) fn value_unchecked(&self, x: &Vector) -> f64 {
        let base = match &self.loss {
            Loss::Quadratic {
                hessian,
                linear,
                offset,
            } => 0.5 * x.dot(&(&**hessian * x)) + linear.dot(x) + offset,
            Loss::Ridge { data, .. } => {
                let n = data.labels.len() as f64;
                let residual = &data.features * x - &data.labels;
                residual.norm_squared() / n + 0.5 * data.lambda * x.norm_squared()
            }
            Loss::Smooth(l) => l.value(x),
        };
        match &self.shift {
            Some(s) => base + 0.5 * s.gamma * (x - &s.center).norm_squared() + s.offset,
            None => base,
        }
    }

    /// `∇f_m(x)`.
    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(self.grad_unchecked(x))
    }

    pub(crate) fn grad_unchecked(&self, x: &Vector) -> Vector {
        let mut g = match &self.loss {
            Loss::Quadratic {
                hessian, linear, ..
            }
            | Loss::Ridge {
                hessian, linear, ..
            } => &**hessian * x + linear,
            Loss::Smooth(l) => l.grad(x),
        };
        if let Some(s) = &self.shift {
            g.axpy(s.gamma, x, 1.0);
            g.axpy(-s.gamma, &s.center, 1.0);
        }
        g
    }

    /// The client's own minimizer `x*_m` (quadratic clients only).
    pub fn minimizer(&self) -> Result<Vector> {
        let h = self
            .hessian()
            .ok_or_else(|| Error::Unsupported("minimizer of a black-box client".into()))?;
        let c = self.linear_term().expect("quadratic");
        let chol = cholesky(h).map_err(|_| Error::NoMinimizer("singular client Hessian".into()))?;
        Ok(-chol.solve(&c))
    }
}

/// Convex regularizer `R` of the composite problem `f + R`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Regularizer {
    #[default]
    None,
    /// `w·‖x‖₁`.
    L1 { weight: f64 },
    /// Indicator of the Euclidean ball of the given radius.
    Ball { radius: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Regularizer::None => Ok(()),
            Regularizer::L1 { weight } if weight > 0.0 && weight.is_finite() => Ok(()),
            Regularizer::Ball { radius } if radius > 0.0 && radius.is_finite() => Ok(()),
            other => Err(Error::InvalidParameter(format!(
                "regularizer {other:?} needs a positive finite parameter"
            ))),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Regularizer::None)
    }

    /// `R(x)`; the ball indicator tolerates a relative overshoot of 1e-12.
    pub fn value(&self, x: &Vector) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1 { weight } => weight * x.lp_norm(1),
            Regularizer::Ball { radius } => {
                if x.norm() <= radius * (1.0 + 1e-12) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `prox_{ηR}(z)`.
    pub fn prox(&self, eta: f64, z: &Vector) -> Vector {
        match *self {
            Regularizer::None => z.clone(),
            Regularizer::L1 { weight } => {
                let t = eta * weight;
                z.map(|v| v.signum() * (v.abs() - t).max(0.0))
            }
            Regularizer::Ball { radius } => {
                let norm = z.norm();
                if norm <= radius {
                    z.clone()
                } else {
                    z * (radius / norm)
                }
            }
        }
    }
}

/// Analytic constants of a federated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConstants {
    /// Strong convexity shared by every client.
    pub mu: f64,
    /// Smoothness of the average `f`.
    pub smoothness: f64,
    /// Second-order similarity constant.
    pub delta: f64,
    /// `(1/M)Σ‖∇f_m(x*)‖²`.
    pub sigma_star_sq: f64,
    pub x_star: Vector,
    /// Optimal value of `f + R`.
    pub f_star: f64,
}

impl ProblemConstants {
    /// `L/μ`.
    pub fn condition_number(&self) -> f64 {
        self.smoothness / self.mu
    }
}

/// `f(x) = (1/M)Σ f_m(x)` plus an optional regularizer.
#[derive(Debug, Clone)]
pub struct FederatedProblem {
    clients: Vec<ClientObjective>,
    regularizer: Regularizer,
    dim: usize,
    constants: OnceLock<ProblemConstants>,
}

impl FederatedProblem {
    pub fn new(clients: Vec<ClientObjective>, regularizer: Regularizer) -> Result<Self> {
        let first = clients
            .first()
            .ok_or_else(|| Error::InvalidParameter("a problem needs at least one client".into()))?;
        let dim = first.dim();
        for c in &clients {
            check_dim(dim, c.dim())?;
        }
        regularizer.validate()?;
        Ok(Self {
            clients,
            regularizer,
            dim,
            constants: OnceLock::new(),
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn clients(&self) -> &[ClientObjective] {
        &self.clients
    }

    pub fn client(&self, m: usize) -> &ClientObjective {
        &self.clients[m]
    }

    pub fn regularizer(&self) -> Regularizer {
        self.regularizer
    }

    /// Same clients with a different regularizer.
    pub fn with_regularizer(&self, regularizer: Regularizer) -> Result<Self> {
        Self::new(self.clients.clone(), regularizer)
    }

    /// Every client gains `(γ/2)‖x − center‖²`; the regularizer is kept.
    pub fn shifted(&self, gamma: f64, center: &Vector) -> Self {
        Self {
            clients: self
                .clients
                .iter()
                .map(|c| c.shifted(gamma, center))
                .collect(),
            regularizer: self.regularizer,
            dim: self.dim,
            constants: OnceLock::new(),
        }
    }

    pub fn is_quadratic(&self) -> bool {
        self.clients.iter().all(ClientObjective::is_quadratic)
    }

    /// Mean of client gradients, reduced in ascending client order.
    pub fn full_grad(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        Ok(self.full_grad_unchecked(x))
    }

    pub(crate) fn full_grad_unchecked(&self, x: &Vector) -> Vector {
        let mut acc = Vector::zeros(self.dim);
        for c in &self.clients {
            acc += c.grad_unchecked(x);
        }
        acc / self.clients.len() as f64
    }

    /// Smooth part `f(x)`.
    pub fn smooth_value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        let sum: f64 = self.clients.iter().map(|c| c.value_unchecked(x)).sum();
        Ok(sum / self.clients.len() as f64)
    }

    /// `f(x) + R(x)`.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.smooth_value(x)? + self.regularizer.value(x))
    }

    /// `(H̄, c̄)` of the average quadratic.
    pub fn mean_quadratic(&self) -> Result<(Matrix, Vector)> {
        let mut h = Matrix::zeros(self.dim, self.dim);
        let mut c = Vector::zeros(self.dim);
        for client in &self.clients {
            let view = client
                .quadratic_view()
                .ok_or_else(|| Error::Unsupported("constants of a non-quadratic client".into()))?;
            h += &**view.hessian;
            if view.isotropic != 0.0 {
                for i in 0..self.dim {
                    h[(i, i)] += view.isotropic;
                }
            }
            c += view.effective_linear();
        }
        let m = self.clients.len() as f64;
        Ok((h / m, c / m))
    }

    /// Cached constants; computed on first use with the given tolerance.
    pub fn constants(&self, tol: f64) -> Result<&ProblemConstants> {
        if let Some(c) = self.constants.get() {
            return Ok(c);
        }
        let computed = compute_constants(self, tol)?;
        Ok(self.constants.get_or_init(|| computed))
    }
}

/// `f_m(x)`.
pub fn eval_value(obj: &ClientObjective, x: &Vector) -> Result<f64> {
    obj.value(x)
}

/// `∇f_m(x)`.
pub fn eval_grad(obj: &ClientObjective, x: &Vector) -> Result<Vector> {
    obj.grad(x)
}

/// `∇f(x)`, averaged in client-index order.
pub fn full_grad(problem: &FederatedProblem, x: &Vector) -> Result<Vector> {
    problem.full_grad(x)
}

/// `(1/M)Σ‖∇f_m(x_star)‖²`.
pub fn sigma_star_sq(problem: &FederatedProblem, x_star: &Vector) -> Result<f64> {
    check_dim(problem.dim(), x_star.len())?;
    let sum: f64 = problem
        .clients()
        .iter()
        .map(|c| c.grad_unchecked(x_star).norm_squared())
        .sum();
    Ok(sum / problem.num_clients() as f64)
}

/// Hessian-deviation matrix `D = (1/M)Σ(H_m − H̄)²`.
pub fn hessian_deviation(problem: &FederatedProblem) -> Result<Matrix> {
    let (mean, _) = problem.mean_quadratic()?;
    let d = problem.dim();
    let mut acc = Matrix::zeros(d, d);
    for client in problem.clients() {
        let dev = client.hessian().expect("checked quadratic") - &mean;
        acc.gemm(1.0, &dev, &dev, 1.0);
    }
    let mut acc = acc / problem.num_clients() as f64;
    crate::linalg::symmetrize(&mut acc);
    Ok(acc)
}

/// Second-order similarity constant `δ = √λ_max(D)` for quadratic clients.
pub fn estimate_delta(problem: &FederatedProblem, tol: f64) -> Result<f64> {
    let dev = hessian_deviation(problem)?;
    let top = largest_eigenvalue(&dev, PowerIteration::with_tol(tol));
    Ok(top.max(0.0).sqrt())
}

/// Sampled left side of the similarity inequality divided by `‖x − y‖²`:
/// `(1/M)Σ‖∇f_m(x) − ∇f(x) − ∇f_m(y) + ∇f(y)‖² / ‖x − y‖²`.
pub fn similarity_ratio(problem: &FederatedProblem, x: &Vector, y: &Vector) -> Result<f64> {
    check_dim(problem.dim(), x.len())?;
    check_dim(problem.dim(), y.len())?;
    let gx = problem.full_grad_unchecked(x);
    let gy = problem.full_grad_unchecked(y);
    let mut sum = 0.0;
    for c in problem.clients() {
        let diff = c.grad_unchecked(x) - &gx - c.grad_unchecked(y) + &gy;
        sum += diff.norm_squared();
    }
    Ok(sum / problem.num_clients() as f64 / (x - y).norm_squared())
}

/// Largest sampled similarity ratio over `pairs` random Gaussian pairs.
pub fn max_similarity_ratio(problem: &FederatedProblem, pairs: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let x = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let y = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        worst = worst.max(similarity_ratio(problem, &x, &y)?);
    }
    Ok(worst)
}

/// Computes μ, L, δ, σ*², x* and f* for a problem with quadratic clients.
///
/// Without a regularizer `x*` comes from a Cholesky solve of `H̄x = −c̄`;
/// with one, from accelerated proximal gradient run to machine precision.
pub fn compute_constants(problem: &FederatedProblem, tol: f64) -> Result<ProblemConstants> {
    let (h_mean, c_mean) = problem.mean_quadratic()?;
    let opts = PowerIteration::with_tol(tol);
    let smoothness = largest_eigenvalue(&h_mean, opts);
    let mu = problem
        .clients()
        .iter()
        .map(ClientObjective::mu)
        .fold(f64::INFINITY, f64::min);
    let delta = estimate_delta(problem, tol)?;

    let x_star = if problem.regularizer().is_none() {
        let chol = Cholesky::new(h_mean.clone())
            .ok_or_else(|| Error::NoMinimizer("averaged Hessian is singular".into()))?;
        -chol.solve(&c_mean)
    } else {
        let mu_f = smallest_eigenvalue(&h_mean, opts);
        if mu_f <= 0.0 {
            return Err(Error::NoMinimizer("averaged Hessian is singular".into()));
        }
        composite_minimizer(&h_mean, &c_mean, problem.regularizer(), mu_f, smoothness)
    };
    let sigma = sigma_star_sq(problem, &x_star)?;
    let f_star = problem.value(&x_star)?;
    Ok(ProblemConstants {
        mu,
        smoothness,
        delta,
        sigma_star_sq: sigma,
        x_star,
        f_star,
    })
}

/// Minimizer of `½xᵀHx + cᵀx + R(x)` by accelerated proximal gradient with
/// strong-convexity momentum. Stops once the exact subgradient at the new
/// point certifies `‖x − x*‖ ≤ 1e-13·max(1, ‖x‖)`.
fn composite_minimizer(h: &Matrix, c: &Vector, reg: Regularizer, mu: f64, l: f64) -> Vector {
    let d = c.len();
    let step = 1.0 / l;
    let kappa = l / mu;
    let momentum = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);
    let grad = |x: &Vector| h * x + c;
    let mut x = reg.prox(1.0, &Vector::zeros(d));
    let mut u = x.clone();
    let mut gu = grad(&u);
    for _ in 0..2_000_000 {
        let next = reg.prox(step, &(&u - &gu * step));
        let gn = grad(&next);
        let sub = (&u - &next) / step + &gn - &gu;
        let done = sub.norm() / mu <= 1e-13 * next.norm().max(1.0);
        let extrapolated = &next + (&next - &x) * momentum;
        x = next;
        if done {
            break;
        }
        u = extrapolated;
        gu = grad(&u);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn diag(xs: &[f64]) -> Matrix {
        Matrix::from_diagonal(&v(xs))
    }

    fn example_one(a: f64) -> FederatedProblem {
        let f1 = ClientObjective::quadratic(diag(&[2.0 * a]), v(&[0.0])).unwrap();
        let f2 = ClientObjective::quadratic(diag(&[4.0 * a]), v(&[0.0])).unwrap();
        FederatedProblem::new(vec![f1, f2], Regularizer::None).unwrap()
    }

    fn random_problem(m: usize, d: usize, seed: u64) -> FederatedProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients = (0..m)
            .map(|_| {
                let g = Matrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut rng));
                let mut h = &g * g.transpose() / d as f64 + Matrix::identity(d, d) * 0.5;
                crate::linalg::symmetrize(&mut h);
                let c = Vector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                ClientObjective::quadratic(h, c).unwrap()
            })
            .collect();
        FederatedProblem::new(clients, Regularizer::None).unwrap()
    }

    #[test]
    fn value_examples() {
        let f = ClientObjective::quadratic(diag(&[2.0]), v(&[0.0])).unwrap();
        assert_eq!(f.value(&v(&[3.0])).unwrap(), 9.0);

        let z = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let planted = ClientObjective::dataset_ridge(z.clone(), v(&[0.0]), 2.0).unwrap();
        assert_eq!(planted.value(&v(&[0.0, 0.0])).unwrap(), 0.0);

        let unit = ClientObjective::dataset_ridge(z, v(&[1.0]), 0.0).unwrap();
        assert_eq!(unit.value(&v(&[0.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn grad_examples() {
        let f = ClientObjective::quadratic(diag(&[2.0]), v(&[0.0])).unwrap();
        assert_eq!(f.grad(&v(&[3.0])).unwrap()[0], 6.0);

        let z = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let ridge = ClientObjective::dataset_ridge(z, v(&[1.0]), 2.0).unwrap();
        let x = v(&[1.0, 1.0]);
        let g = ridge.grad(&x).unwrap();
        // Central differences, frozen: (2, 2).
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (ridge.value(&xp).unwrap() - ridge.value(&xm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6);
        }
        assert!((g - v(&[2.0, 2.0])).norm() < 1e-12);

        let own = ridge.minimizer().unwrap();
        assert!(ridge.grad(&own).unwrap().norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let f = ClientObjective::quadratic(diag(&[2.0, 2.0]), v(&[0.0, 0.0])).unwrap();
        assert!(matches!(
            f.value(&v(&[1.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(f.grad(&v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn asymmetric_hessian_rejected() {
        let h = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(ClientObjective::quadratic(h, v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn full_grad_examples() {
        let p = example_one(1.0);
        assert_eq!(p.full_grad(&v(&[1.0])).unwrap()[0], 3.0);

        let single = FederatedProblem::new(vec![p.client(1).clone()], Regularizer::None).unwrap();
        let x = v(&[0.7]);
        assert_eq!(
            single.full_grad(&x).unwrap(),
            single.client(0).grad(&x).unwrap()
        );
    }

    #[test]
    fn constants_of_symmetric_pair() {
        let a = ClientObjective::quadratic(diag(&[1.0, 3.0]), v(&[0.0, 0.0])).unwrap();
        let b = ClientObjective::quadratic(diag(&[3.0, 1.0]), v(&[0.0, 0.0])).unwrap();
        let p = FederatedProblem::new(vec![a, b], Regularizer::None).unwrap();
        let k = compute_constants(&p, 1e-10).unwrap();
        assert!((k.smoothness - 2.0).abs() < 1e-9);
        assert!((k.mu - 1.0).abs() < 1e-9);
        assert!(k.x_star.norm() < 1e-15);
        assert_eq!(k.sigma_star_sq, 0.0);
        assert!((k.delta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn single_client_has_zero_delta() {
        let p = random_problem(1, 4, 3);
        assert_eq!(estimate_delta(&p, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn identical_clients_have_zero_delta() {
        let c = random_problem(1, 3, 9).client(0).clone();
        let p = FederatedProblem::new(vec![c.clone(), c.clone(), c], Regularizer::None).unwrap();
        assert_eq!(estimate_delta(&p, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn constants_match_dense_oracle() {
        for seed in 0..5 {
            let p = random_problem(4, 5, seed);
            let k = compute_constants(&p, 1e-10).unwrap();
            let (h, c) = p.mean_quadratic().unwrap();
            let eig = SymmetricEigen::new(h.clone());
            let l = eig.eigenvalues.max();
            assert!((k.smoothness - l).abs() <= 1e-6 * l);
            let mu = p
                .clients()
                .iter()
                .map(|cl| SymmetricEigen::new(cl.hessian().unwrap()).eigenvalues.min())
                .fold(f64::INFINITY, f64::min);
            assert!((k.mu - mu).abs() <= 1e-6 * mu);
            let x = h.lu().solve(&(-c)).unwrap();
            assert!((&k.x_star - x).norm() <= 1e-9 * (1.0 + k.x_star.norm()));
            let g0 = p.full_grad(&Vector::zeros(5)).unwrap().norm();
            assert!(p.full_grad(&k.x_star).unwrap().norm() <= 1e-8 * g0.max(1.0));
        }
    }

    #[test]
    fn delta_matches_dense_oracle() {
        let p = random_problem(4, 8, 11);
        let dev = hessian_deviation(&p).unwrap();
        let oracle = SymmetricEigen::new(dev).eigenvalues.max().sqrt();
        let got = estimate_delta(&p, 1e-12).unwrap();
        assert!((got - oracle).abs() <= 1e-6 * oracle);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(sigma_star_sq(&example_one(1.0), &v(&[0.0])).unwrap(), 0.0);
        // (x−1)² = x² − 2x + 1 and (x+1)².
        let f1 = ClientObjective::quadratic(diag(&[2.0]), v(&[-2.0])).unwrap();
        let f2 = ClientObjective::quadratic(diag(&[2.0]), v(&[2.0])).unwrap();
        let p = FederatedProblem::new(vec![f1, f2], Regularizer::None).unwrap();
        assert_eq!(sigma_star_sq(&p, &v(&[0.0])).unwrap(), 4.0);
    }

    #[test]
    fn shift_composes_and_keeps_gradient_differences() {
        let p = random_problem(3, 4, 5);
        let center = v(&[1.0, -2.0, 0.5, 0.0]);
        let s = p.shifted(0.7, &center);
        let x = v(&[0.3, 0.1, -0.2, 2.0]);
        for m in 0..3 {
            let lhs = s.client(m).grad(&x).unwrap() - s.full_grad(&x).unwrap();
            let rhs = p.client(m).grad(&x).unwrap() - p.full_grad(&x).unwrap();
            assert!((lhs - rhs).norm() < 1e-12);
        }
        let twice = p.client(0).shifted(0.3, &center).shifted(0.4, &x);
        let y = v(&[0.0, 1.0, 1.0, -1.0]);
        let direct = p.client(0).value(&y).unwrap()
            + 0.15 * (&y - &center).norm_squared()
            + 0.2 * (&y - &x).norm_squared();
        assert!((twice.value(&y).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn regularizer_prox_examples() {
        assert_eq!(Regularizer::None.prox(1.0, &v(&[1.0, 2.0])), v(&[1.0, 2.0]));
        assert_eq!(
            Regularizer::L1 { weight: 1.0 }.prox(1.0, &v(&[3.0, -0.5])),
            v(&[2.0, 0.0])
        );
        let p = Regularizer::Ball { radius: 1.0 }.prox(1.0, &v(&[3.0, 4.0]));
        assert!((p - v(&[0.6, 0.8])).norm() < 1e-15);
        assert!(Regularizer::L1 { weight: 0.0 }.validate().is_err());
        assert!(Regularizer::Ball { radius: -1.0 }.validate().is_err());
    }

    #[test]
    fn composite_minimizer_of_scalar_l1() {
        // ½(x−4)² + |x| on one client → x* = 3.
        let f = ClientObjective::quadratic(diag(&[1.0]), v(&[-4.0])).unwrap();
        let p = FederatedProblem::new(vec![f], Regularizer::L1 { weight: 1.0 }).unwrap();
        let k = compute_constants(&p, 1e-10).unwrap();
        assert!((k.x_star[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn black_box_clients_are_unsupported_for_constants() {
        #[derive(Debug)]
        struct Quartic;
        impl SmoothLoss for Quartic {
            fn dim(&self) -> usize {
                1
            }
            fn value(&self, x: &Vector) -> f64 {
                x[0].powi(4) + x[0] * x[0]
            }
            fn grad(&self, x: &Vector) -> Vector {
                v(&[4.0 * x[0].powi(3) + 2.0 * x[0]])
            }
        }
        let c = ClientObjective::smooth(Arc::new(Quartic), 2.0, 100.0).unwrap();
        let p = FederatedProblem::new(vec![c], Regularizer::None).unwrap();
        assert!(matches!(
            compute_constants(&p, 1e-8),
            Err(Error::Unsupported(_))
        ));
        assert_eq!(p.full_grad(&v(&[1.0])).unwrap()[0], 6.0);
    }

    #[test]
    fn singular_average_has_no_minimizer() {
        let z = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let c = ClientObjective::dataset_ridge(z, v(&[1.0]), 0.0).unwrap();
        let p = FederatedProblem::new(vec![c], Regularizer::None).unwrap();
        assert!(matches!(
            compute_constants(&p, 1e-8),
            Err(Error::NoMinimizer(_))
        ));
    }
}
