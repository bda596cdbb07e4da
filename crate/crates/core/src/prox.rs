//! Proximal oracles.
//!
//! `prox_{ηh}(z) = argmin_y ηh(y) + ½‖y − z‖²`. Quadratic clients admit an
//! exact oracle through one symmetric solve; the iterative oracles return a
//! *b-approximation*, a point within squared distance `b` of the exact
//! answer, certified by the strong convexity of the local objective.

use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{Cholesky, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, cholesky, Matrix, Vector};
use crate::problem::{ClientObjective, FederatedProblem, Regularizer};

/// Accuracy substituted for `b = 0` when no exact oracle exists.
pub const ZERO_ACCURACY_FALLBACK: f64 = 1e-14;

/// Which oracle evaluates the local proximal problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProxMethod {
    Exact,
    Gd,
    Agd,
    CompositePg,
}

/// Prox oracle selection plus stepsize and accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxSpec {
    pub method: ProxMethod,
    pub eta: f64,
    /// Squared-distance accuracy `b`.
    pub accuracy: f64,
    /// Overrides the default inner iteration cap.
    pub max_inner_iters: Option<usize>,
}

impl ProxSpec {
    pub fn new(method: ProxMethod, eta: f64, accuracy: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidParameter(format!("prox stepsize η={eta} must be > 0")));
        }
        if !(accuracy >= 0.0) {
            return Err(Error::InvalidParameter(format!("prox accuracy b={accuracy} must be ≥ 0")));
        }
        Ok(Self {
            method,
            eta,
            accuracy,
            max_inner_iters: None,
        })
    }

    pub fn exact(eta: f64) -> Result<Self> {
        Self::new(ProxMethod::Exact, eta, 0.0)
    }

    pub fn with_max_inner_iters(mut self, iters: usize) -> Self {
        self.max_inner_iters = Some(iters);
        self
    }
}

/// Output of an iterative prox oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    pub point: Vector,
    /// Gradient steps taken.
    pub inner_iters: usize,
    /// The exit certificate held before the iteration cap.
    pub certified: bool,
}

impl ProxResult {
    fn exact(point: Vector) -> Self {
        Self {
            point,
            inner_iters: 0,
            certified: true,
        }
    }
}

/// Default inner-iteration cap for accelerated solvers:
/// `10·⌈√((ηL+1)/(ημ+1))·ln(1/b + e)⌉ + 100`.
pub fn default_max_inner_iters(eta: f64, mu: f64, l: f64, b: f64) -> usize {
    let ratio = ((eta * l + 1.0) / (eta * mu + 1.0)).sqrt();
    10 * (ratio * (1.0 / b + std::f64::consts::E).ln()).ceil() as usize + 100
}

/// Cap for plain gradient descent, whose rate scales with the condition
/// number itself rather than its square root.
fn default_gd_iters(eta: f64, mu: f64, l: f64, b: f64) -> usize {
    let ratio = (eta * l + 1.0) / (eta * mu + 1.0);
    10 * (ratio * (1.0 / b + std::f64::consts::E).ln()).ceil() as usize + 100
}

fn check_inputs(client: &ClientObjective, eta: f64, z: &Vector) -> Result<()> {
    check_dim(client.dim(), z.len())?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("prox stepsize η={eta} must be > 0")));
    }
    if !all_finite(z) {
        return Err(Error::InvalidParameter("prox argument has non-finite entries".into()));
    }
    Ok(())
}

fn prox_system(client: &ClientObjective, eta: f64) -> Result<Matrix> {
    let view = client
        .quadratic_view()
        .ok_or_else(|| Error::Unsupported("exact prox of a black-box client".into()))?;
    let d = client.dim();
    let mut a = &**view.hessian * eta;
    for i in 0..d {
        a[(i, i)] += 1.0 + eta * view.isotropic;
    }
    Ok(a)
}

fn prox_rhs(client: &ClientObjective, eta: f64, z: &Vector) -> Vector {
    let c = client.linear_term().expect("quadratic client");
    z - c * eta
}

/// Exact prox of a quadratic client: solves `(I + ηH)y = z − ηc`.
pub fn prox_exact_quadratic(client: &ClientObjective, eta: f64, z: &Vector) -> Result<Vector> {
    check_inputs(client, eta, z)?;
    let chol = cholesky(prox_system(client, eta)?)?;
    Ok(chol.solve(&prox_rhs(client, eta, z)))
}

/// Gradient descent on `f(y) + (1/2η)‖y − z‖²` started at `y₀ = z` with step
/// `1/(L + 1/η)`; exits once `‖Δ‖² ≤ b(μ + 1/η)²`.
pub fn prox_gd(
    client: &ClientObjective,
    eta: f64,
    z: &Vector,
    b: f64,
    mu: f64,
    l: f64,
    max_iters: Option<usize>,
) -> Result<ProxResult> {
    check_inputs(client, eta, z)?;
    let b = if b > 0.0 { b } else { ZERO_ACCURACY_FALLBACK };
    let inv_eta = 1.0 / eta;
    let step = 1.0 / (l + inv_eta);
    let threshold = b * (mu + inv_eta).powi(2);
    let cap = max_iters.unwrap_or_else(|| default_gd_iters(eta, mu, l, b));

    let mut y = z.clone();
    for t in 0..=cap {
        let mut delta = client.grad_unchecked(&y);
        delta.axpy(inv_eta, &(&y - z), 1.0);
        if delta.norm_squared() <= threshold {
            return Ok(ProxResult {
                point: y,
                inner_iters: t,
                certified: true,
            });
        }
        if t == cap {
            break;
        }
        y.axpy(-step, &delta, 1.0);
    }
    log::warn!("prox_gd hit its cap of {cap} iterations without certifying b={b:e}");
    Ok(ProxResult {
        point: y,
        inner_iters: cap,
        certified: false,
    })
}

/// Nesterov's method for the `(μ + 1/η)`-strongly convex, `(L + 1/η)`-smooth
/// local objective. The certificate is checked at the extrapolated point,
/// whose gradient the method computes anyway.
pub fn prox_agd(
    client: &ClientObjective,
    eta: f64,
    z: &Vector,
    b: f64,
    mu: f64,
    l: f64,
    max_iters: Option<usize>,
) -> Result<ProxResult> {
    check_inputs(client, eta, z)?;
    let b = if b > 0.0 { b } else { ZERO_ACCURACY_FALLBACK };
    let inv_eta = 1.0 / eta;
    let strong = mu + inv_eta;
    let smooth = l + inv_eta;
    let step = 1.0 / smooth;
    let root = (smooth / strong).sqrt();
    let momentum = (root - 1.0) / (root + 1.0);
    let threshold = b * strong * strong;
    let cap = max_iters.unwrap_or_else(|| default_max_inner_iters(eta, mu, l, b));

    let mut x_prev = z.clone();
    let mut u = z.clone();
    for t in 0..=cap {
        let mut delta = client.grad_unchecked(&u);
        delta.axpy(inv_eta, &(&u - z), 1.0);
        if delta.norm_squared() <= threshold {
            return Ok(ProxResult {
                point: u,
                inner_iters: t,
                certified: true,
            });
        }
        if t == cap {
            break;
        }
        let x_next = &u - &delta * step;
        u = &x_next + (&x_next - &x_prev) * momentum;
        x_prev = x_next;
    }
    log::warn!("prox_agd hit its cap of {cap} iterations without certifying b={b:e}");
    Ok(ProxResult {
        point: u,
        inner_iters: cap,
        certified: false,
    })
}

/// `prox_{ηR}(z)`: identity, soft-thresholding at `ηw`, or ball projection.
pub fn prox_regularizer(reg: Regularizer, eta: f64, z: &Vector) -> Vector {
    reg.prox(eta, z)
}

/// `prox_{ηf + ηR}(z)` by accelerated proximal gradient on
/// `f(y) + (1/2η)‖y − z‖² + R(y)`.
///
/// Each candidate `y⁺ = prox_{βR}(u − β∇φ(u))` comes with the subgradient
/// `s = (u − y⁺)/β + ∇φ(y⁺) − ∇φ(u) ∈ ∂(φ + R)(y⁺)`, and the solver exits once
/// `‖s‖² ≤ b(μ + 1/η)²`, which bounds `‖y⁺ − target‖² ≤ b`.
pub fn prox_composite(
    client: &ClientObjective,
    reg: Regularizer,
    eta: f64,
    z: &Vector,
    b: f64,
    mu: f64,
    l: f64,
    max_iters: Option<usize>,
) -> Result<ProxResult> {
    check_inputs(client, eta, z)?;
    reg.validate()?;
    let b = if b > 0.0 { b } else { ZERO_ACCURACY_FALLBACK };
    let inv_eta = 1.0 / eta;
    let strong = mu + inv_eta;
    let smooth = l + inv_eta;
    let step = 1.0 / smooth;
    let root = (smooth / strong).sqrt();
    let momentum = (root - 1.0) / (root + 1.0);
    let threshold = b * strong * strong;
    let cap = max_iters.unwrap_or_else(|| default_max_inner_iters(eta, mu, l, b));

    let local_grad = |y: &Vector| {
        let mut g = client.grad_unchecked(y);
        g.axpy(inv_eta, &(y - z), 1.0);
        g
    };

    let start = reg.prox(step, z);
    let mut x_prev = start.clone();
    let mut u = start;
    let mut gu = local_grad(&u);
    let mut last = u.clone();
    for t in 1..=cap {
        let next = reg.prox(step, &(&u - &gu * step));
        let gn = local_grad(&next);
        let sub = (&u - &next) / step + &gn - &gu;
        if sub.norm_squared() <= threshold {
            return Ok(ProxResult {
                point: next,
                inner_iters: t,
                certified: true,
            });
        }
        u = &next + (&next - &x_prev) * momentum;
        x_prev = next.clone();
        last = next;
        gu = local_grad(&u);
    }
    log::warn!("prox_composite hit its cap of {cap} iterations without certifying b={b:e}");
    Ok(ProxResult {
        point: last,
        inner_iters: cap,
        certified: false,
    })
}

#[derive(Debug)]
struct CachedFactor {
    hessian: *const Matrix,
    eta: f64,
    isotropic: f64,
    factor: Cholesky<f64, Dyn>,
}

/// Stateful prox evaluator for one run: dispatches on [`ProxSpec`] and caches
/// the Cholesky factor of `I + ηH_m` per client for the exact oracle.
///
/// Cache entries are keyed by the client's Hessian allocation, `η` and the
/// isotropic shift, so shifted copies of a problem (as built by the Catalyst
/// outer loop) reuse the factorization.
#[derive(Debug)]
pub struct ProxEngine {
    spec: ProxSpec,
    cache: RefCell<Vec<Option<CachedFactor>>>,
    // Keeps cached Hessians alive so the pointer keys stay unique.
    pinned: RefCell<Vec<Option<Arc<Matrix>>>>,
}

impl Clone for ProxEngine {
    fn clone(&self) -> Self {
        Self::new(self.spec)
    }
}

impl ProxEngine {
    pub fn new(spec: ProxSpec) -> Self {
        Self {
            spec,
            cache: RefCell::new(Vec::new()),
            pinned: RefCell::new(Vec::new()),
        }
    }

    pub fn spec(&self) -> &ProxSpec {
        &self.spec
    }

    pub fn eta(&self) -> f64 {
        self.spec.eta
    }

    fn exact_cached(&self, m: usize, client: &ClientObjective, z: &Vector) -> Result<Vector> {
        let view = client
            .quadratic_view()
            .ok_or_else(|| Error::Unsupported("exact prox of a black-box client".into()))?;
        let key = Arc::as_ptr(view.hessian);
        let eta = self.spec.eta;
        let mut cache = self.cache.borrow_mut();
        let mut pinned = self.pinned.borrow_mut();
        if cache.len() <= m {
            cache.resize_with(m + 1, || None);
            pinned.resize_with(m + 1, || None);
        }
        let fresh = match &cache[m] {
            Some(entry) => {
                entry.hessian != key || entry.eta != eta || entry.isotropic != view.isotropic
            }
            None => true,
        };
        if fresh {
            let factor = cholesky(prox_system(client, eta)?)?;
            cache[m] = Some(CachedFactor {
                hessian: key,
                eta,
                isotropic: view.isotropic,
                factor,
            });
            pinned[m] = Some(Arc::clone(view.hessian));
        }
        let entry = cache[m].as_ref().expect("filled above");
        Ok(entry.factor.solve(&prox_rhs(client, eta, z)))
    }

    fn smooth(&self, problem: &FederatedProblem, m: usize, z: &Vector) -> Result<ProxResult> {
        let client = problem.client(m);
        check_inputs(client, self.spec.eta, z)?;
        let b = self.spec.accuracy;
        let exact_ok = client.is_quadratic();
        match self.spec.method {
            ProxMethod::Exact => Ok(ProxResult::exact(self.exact_cached(m, client, z)?)),
            _ if b == 0.0 && exact_ok => Ok(ProxResult::exact(self.exact_cached(m, client, z)?)),
            ProxMethod::Gd => prox_gd(
                client,
                self.spec.eta,
                z,
                b,
                client.mu(),
                client.smoothness(),
                self.spec.max_inner_iters,
            ),
            ProxMethod::Agd => prox_agd(
                client,
                self.spec.eta,
                z,
                b,
                client.mu(),
                client.smoothness(),
                self.spec.max_inner_iters,
            ),
            ProxMethod::CompositePg => prox_composite(
                client,
                Regularizer::None,
                self.spec.eta,
                z,
                b,
                client.mu(),
                client.smoothness(),
                self.spec.max_inner_iters,
            ),
        }
    }

    /// `≃ prox_{ηf_m}(z)`, ignoring any regularizer on the problem.
    pub fn apply(&self, problem: &FederatedProblem, m: usize, z: &Vector) -> Result<ProxResult> {
        self.smooth(problem, m, z)
    }

    /// `≃ prox_{ηf_m + ηR}(z)` with the problem's regularizer. Without a
    /// regularizer this is exactly [`ProxEngine::apply`].
    pub fn apply_composite(
        &self,
        problem: &FederatedProblem,
        m: usize,
        z: &Vector,
    ) -> Result<ProxResult> {
        let reg = problem.regularizer();
        if reg.is_none() {
            return self.smooth(problem, m, z);
        }
        let client = problem.client(m);
        prox_composite(
            client,
            reg,
            self.spec.eta,
            z,
            self.spec.accuracy,
            client.mu(),
            client.smoothness(),
            self.spec.max_inner_iters,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn scalar(h: f64, c: f64) -> ClientObjective {
        ClientObjective::quadratic(Matrix::from_element(1, 1, h), v(&[c])).unwrap()
    }

    fn random_client(d: usize, rng: &mut ChaCha8Rng) -> ClientObjective {
        let z = Matrix::from_fn(3 * d, d, |_, _| StandardNormal.sample(rng));
        let y = Vector::from_fn(3 * d, |_, _| StandardNormal.sample(rng));
        ClientObjective::dataset_ridge(z, y, 0.5).unwrap()
    }

    #[test]
    fn exact_examples() {
        // f(y) = y², H = 2: prox(3) = 3/(1 + 2).
        let f = scalar(2.0, 0.0);
        assert!((prox_exact_quadratic(&f, 1.0, &v(&[3.0])).unwrap()[0] - 1.0).abs() < 1e-15);

        let iso = ClientObjective::quadratic(Matrix::identity(2, 2) * 0.5, v(&[0.0, 0.0])).unwrap();
        let z = v(&[4.0, -2.0]);
        let p = prox_exact_quadratic(&iso, 2.0, &z).unwrap();
        assert!((p - &z / 2.0).norm() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_client(4, &mut rng);
        let own = c.minimizer().unwrap();
        let z = &own + c.grad(&own).unwrap() * 0.3;
        assert!((prox_exact_quadratic(&c, 0.3, &z).unwrap() - own).norm() < 1e-10);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = scalar(2.0, 0.0);
        assert!(prox_exact_quadratic(&f, 0.0, &v(&[1.0])).is_err());
        assert!(prox_exact_quadratic(&f, 1.0, &v(&[f64::NAN])).is_err());
        assert!(ProxSpec::new(ProxMethod::Gd, -1.0, 1e-3).is_err());
        assert!(ProxSpec::new(ProxMethod::Gd, 1.0, -1e-3).is_err());
    }

    #[test]
    fn gd_examples() {
        let f = scalar(2.0, 0.0);
        let r = prox_gd(&f, 1.0, &v(&[3.0]), 1e-12, 2.0, 2.0, None).unwrap();
        assert!(r.certified);
        assert!((r.point[0] - 1.0).powi(2) <= 1e-12);

        // The client's own minimizer is a fixed point of its prox.
        let g = scalar(2.0, -1.0);
        let z = g.minimizer().unwrap();
        let r = prox_gd(&g, 0.5, &z, 1e-10, 2.0, 2.0, None).unwrap();
        assert_eq!(r.inner_iters, 0);
        assert_eq!(r.point, z);
    }

    #[test]
    fn gd_meets_rate_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let c = random_client(10, &mut rng);
        let (mu, l, eta, b) = (c.mu(), c.smoothness(), 0.1, 1e-10);
        let z = Vector::from_fn(10, |_, _| StandardNormal.sample(&mut rng));
        let exact = prox_exact_quadratic(&c, eta, &z).unwrap();
        let r = prox_gd(&c, eta, &z, b, mu, l, None).unwrap();
        assert!(r.certified);
        assert!((&r.point - &exact).norm_squared() <= b);
        let delta0 = c.grad(&z).unwrap().norm_squared();
        let inv = 1.0 / eta;
        let bound = ((l + inv) / (mu + inv) * (delta0 / (b * (mu + inv).powi(2))).ln()).ceil() + 1.0;
        assert!((r.inner_iters as f64) <= bound, "{} > {bound}", r.inner_iters);
    }

    #[test]
    fn agd_agrees_and_is_faster_when_ill_conditioned() {
        let f = scalar(2.0, 0.0);
        let r = prox_agd(&f, 1.0, &v(&[3.0]), 1e-12, 2.0, 2.0, None).unwrap();
        assert!((r.point[0] - 1.0).powi(2) <= 1e-12);

        let h = Matrix::from_diagonal(&v(&[1e-2, 1.0, 50.0, 100.0]));
        let c = ClientObjective::quadratic(h, v(&[1.0, -1.0, 2.0, 0.5])).unwrap();
        let (mu, l) = (c.mu(), c.smoothness());
        assert!((l / mu - 1e4).abs() < 1e-6);
        let eta = 1.0 / l;
        let z = v(&[3.0, -2.0, 1.0, 4.0]);
        let exact = prox_exact_quadratic(&c, eta, &z).unwrap();
        let gd = prox_gd(&c, eta, &z, 1e-10, mu, l, None).unwrap();
        let agd = prox_agd(&c, eta, &z, 1e-10, mu, l, None).unwrap();
        assert!((&agd.point - &exact).norm_squared() <= 1e-10);
        assert!((&gd.point - &exact).norm_squared() <= 1e-10);
        assert!(agd.inner_iters < gd.inner_iters, "{} vs {}", agd.inner_iters, gd.inner_iters);
    }

    #[test]
    fn agd_exits_immediately_for_loose_accuracy() {
        let f = scalar(2.0, 0.0);
        let r = prox_agd(&f, 1.0, &v(&[3.0]), 1e3, 2.0, 2.0, None).unwrap();
        assert_eq!(r.inner_iters, 0);
        assert_eq!(r.point[0], 3.0);
    }

    #[test]
    fn uncertified_when_capped() {
        let h = Matrix::from_diagonal(&v(&[1.0, 10.0]));
        let f = ClientObjective::quadratic(h, v(&[0.0, 0.0])).unwrap();
        let r = prox_gd(&f, 1.0, &v(&[3.0, 3.0]), 1e-14, 1.0, 10.0, Some(2)).unwrap();
        assert!(!r.certified);
        assert_eq!(r.inner_iters, 2);
    }

    #[test]
    fn composite_without_regularizer_matches_gd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_client(5, &mut rng);
        let z = Vector::from_fn(5, |_, _| StandardNormal.sample(&mut rng));
        let b = 1e-10;
        let gd = prox_gd(&c, 0.2, &z, b, c.mu(), c.smoothness(), None).unwrap();
        let pg = prox_composite(&c, Regularizer::None, 0.2, &z, b, c.mu(), c.smoothness(), None)
            .unwrap();
        assert!((gd.point - pg.point).norm_squared() <= 2.0 * b);
    }

    #[test]
    fn composite_ball_lands_on_boundary() {
        let f = ClientObjective::quadratic(Matrix::identity(2, 2), v(&[0.0, 0.0])).unwrap();
        let b = 1e-10;
        let r = 0.5;
        let z = v(&[30.0, 40.0]);
        let out =
            prox_composite(&f, Regularizer::Ball { radius: r }, 1.0, &z, b, 1.0, 1.0, None).unwrap();
        assert!(out.certified);
        let n = out.point.norm();
        assert!(n <= r * (1.0 + 1e-15) && n >= r - b.sqrt(), "{n}");
        // 1-D KKT oracle: the minimizer is the radial projection of z/2.
        let kkt = &z / z.norm() * r;
        assert!((&out.point - kkt).norm_squared() <= b);
    }

    #[test]
    fn composite_l1_scalar_matches_grid_search() {
        // ½(y−4)² + |y| + ½(y−z)² at z = 0.
        let f = scalar(1.0, -4.0).with_offset(8.0);
        let b = 1e-12;
        let out = prox_composite(
            &f,
            Regularizer::L1 { weight: 1.0 },
            1.0,
            &v(&[0.0]),
            b,
            1.0,
            1.0,
            None,
        )
        .unwrap();
        let objective = |y: f64| 0.5 * (y - 4.0).powi(2) + y.abs() + 0.5 * y * y;
        let mut best = (f64::INFINITY, 0.0);
        let mut i = -5_000_000i64;
        while i <= 5_000_000 {
            let y = i as f64 * 1e-6;
            let val = objective(y);
            if val < best.0 {
                best = (val, y);
            }
            i += 1;
        }
        assert!((best.1 - 1.5).abs() <= 1e-6);
        assert!((out.point[0] - best.1).abs() <= 2e-6);
    }

    #[test]
    fn engine_caches_and_matches_free_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let clients = (0..3).map(|_| random_client(4, &mut rng)).collect();
        let p = FederatedProblem::new(clients, Regularizer::None).unwrap();
        let engine = ProxEngine::new(ProxSpec::exact(0.7).unwrap());
        let z = v(&[1.0, 2.0, 3.0, 4.0]);
        for m in 0..3 {
            let a = engine.apply(&p, m, &z).unwrap().point;
            let b = prox_exact_quadratic(p.client(m), 0.7, &z).unwrap();
            assert!((a - b).norm() < 1e-14);
        }
        // Shifted problem changes the factor; the cache must notice.
        let s = p.shifted(2.0, &z);
        let a = engine.apply(&s, 1, &z).unwrap().point;
        let b = prox_exact_quadratic(s.client(1), 0.7, &z).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn zero_accuracy_uses_exact_when_available() {
        let f = scalar(2.0, 0.0);
        let p = FederatedProblem::new(vec![f], Regularizer::None).unwrap();
        let engine = ProxEngine::new(ProxSpec::new(ProxMethod::Agd, 1.0, 0.0).unwrap());
        let r = engine.apply(&p, 0, &v(&[3.0])).unwrap();
        assert_eq!(r.inner_iters, 0);
        assert!((r.point[0] - 1.0).abs() < 1e-15);
    }
}
