//! Catalyst acceleration around SVRP.
//!
//! Each outer step approximately minimizes
//! `h_t(x) = f(x) + (γ/2)‖x − y_{t−1}‖²` by running SVRP for a fixed number
//! of iterations, then extrapolates. Shifting every client by the same
//! γ-quadratic leaves the gradient differences `∇h_{t,m} − ∇h_t` untouched,
//! so the inner problem has the same similarity constant δ as the original.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::optim::{eta_cap, svrp_step, StepOutcome, SvrpState};
use crate::problem::FederatedProblem;
use crate::prox::{ProxEngine, ProxSpec};

/// Which branch of the γ selection applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalystCase {
    /// `δ/μ ≥ √M`: `γ = δ/√M − μ`.
    Accelerated,
    /// Otherwise `γ = 0` and the outer loop is plain restarted SVRP.
    Unaccelerated,
}

/// Outer and inner schedule of Catalyzed SVRP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalystParams {
    pub case: CatalystCase,
    pub gamma: f64,
    pub mu: f64,
    /// `q = μ/(μ+γ)`.
    pub q: f64,
    /// `ρ = √q/2`.
    pub rho: f64,
    /// `α₀ = √q`.
    pub alpha0: f64,
    pub outer_iters: usize,
    /// SVRP iterations per outer step.
    pub inner_iters: usize,
    /// Prefactor `A = ((L+γ)/(μ+γ))(1 + (γ+μ)²M/δ²)` of the inner linear rate.
    pub a_factor: f64,
    /// `τ = ½·min{1/(δ²/(γ+μ)² + 1), 1/M}`.
    pub tau_inner: f64,
    /// Inner SVRP stepsize `(μ+γ)/(2δ²)`.
    pub inner_eta: f64,
    /// Inner SVRP refresh probability `1/M`.
    pub inner_p: f64,
}

/// Selects γ and derives the outer and inner budgets.
///
/// `initial_gap` is `f(x₀) − f*`, needed for the outer iteration count.
pub fn catalyst_params(
    mu: f64,
    delta: f64,
    num_clients: usize,
    smoothness: f64,
    eps: f64,
    initial_gap: f64,
) -> Result<CatalystParams> {
    for (name, v) in [("μ", mu), ("δ", delta), ("L", smoothness), ("ε", eps)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidParameter(format!("{name}={v} must be positive")));
        }
    }
    if num_clients == 0 {
        return Err(Error::InvalidParameter("M must be ≥ 1".into()));
    }
    if !(initial_gap >= 0.0 && initial_gap.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial gap {initial_gap} must be ≥ 0")));
    }
    let m = num_clients as f64;
    let (case, gamma) = if delta / mu >= m.sqrt() {
        (CatalystCase::Accelerated, (delta / m.sqrt() - mu).max(0.0))
    } else {
        (CatalystCase::Unaccelerated, 0.0)
    };
    let s = mu + gamma;
    let q = mu / s;
    let rho = q.sqrt() / 2.0;
    let a_factor = (smoothness + gamma) / s * (1.0 + s * s * m / (delta * delta));
    let tau_inner = 0.5 * (1.0 / (delta * delta / (s * s) + 1.0)).min(1.0 / m);
    let root = q.sqrt() - rho;
    let bracket =
        2.0 / (1.0 - rho) + 2592.0 * gamma / (mu * (1.0 - rho).powi(2) * root * root);
    let inner = ((a_factor * bracket).ln() / tau_inner).ceil().max(1.0) as usize;
    let outer_log = initial_gap / eps * 32.0 * s / mu;
    let outer = if outer_log > 1.0 {
        (2.0 * (s / mu).sqrt() * outer_log.ln()).ceil() as usize
    } else {
        1
    };
    Ok(CatalystParams {
        case,
        gamma,
        mu,
        q,
        rho,
        alpha0: q.sqrt(),
        outer_iters: outer.max(1),
        inner_iters: inner,
        a_factor,
        tau_inner,
        inner_eta: (s / (2.0 * delta * delta)).min(eta_cap(s)),
        inner_p: 1.0 / m,
    })
}

/// Root in `(0, 1]` of `α² + (α_prev² − q)α − α_prev² = 0`.
pub fn alpha_update(alpha_prev: f64, q: f64) -> f64 {
    let a2 = alpha_prev * alpha_prev;
    let b = a2 - q;
    let disc = (b * b + 4.0 * a2).sqrt();
    if b > 0.0 {
        // Avoids cancellation in −b + disc.
        2.0 * a2 / (b + disc)
    } else {
        (disc - b) / 2.0
    }
}

/// Residual of `α_t² = (1−α_t)α_{t−1}² + qα_t`.
pub fn alpha_residual(alpha_prev: f64, alpha: f64, q: f64) -> f64 {
    (alpha * alpha - (1.0 - alpha) * alpha_prev * alpha_prev - q * alpha).abs()
}

/// `β_t = α_{t−1}(1−α_{t−1})/(α_{t−1}² + α_t)`.
pub fn extrapolation_weight(alpha_prev: f64, alpha: f64) -> f64 {
    alpha_prev * (1.0 - alpha_prev) / (alpha_prev * alpha_prev + alpha)
}

/// `y_t = x_t + β_t(x_t − x_{t−1})`.
pub fn extrapolate(x: &Vector, x_prev: &Vector, alpha_prev: f64, alpha: f64) -> Vector {
    let beta = extrapolation_weight(alpha_prev, alpha);
    x + (x - x_prev) * beta
}

/// Result of one inner iteration of the Catalyst runner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatalystStep {
    pub inner: StepOutcome,
    /// An outer step finished; the next inner problem needs a fresh anchor.
    pub outer_completed: bool,
}

/// Resumable Catalyzed SVRP, advanced one inner SVRP iteration at a time.
#[derive(Debug, Clone)]
pub struct CatalystState {
    params: CatalystParams,
    base: FederatedProblem,
    inner_problem: FederatedProblem,
    inner: SvrpState,
    engine: ProxEngine,
    /// `x_{t−1}`, the output of the previous outer step.
    x_prev: Vector,
    y: Vector,
    alpha: f64,
    /// Completed outer steps.
    t: usize,
    /// Inner iterations in the current outer step.
    s: usize,
    max_alpha_residual: f64,
}

impl CatalystState {
    pub fn new(problem: &FederatedProblem, params: CatalystParams, x0: Vector) -> Result<Self> {
        if !problem.regularizer().is_none() {
            return Err(Error::Unsupported("Catalyst with a regularizer".into()));
        }
        let inner_problem = problem.shifted(params.gamma, &x0);
        let inner = SvrpState::new(&inner_problem, x0.clone())?;
        Ok(Self {
            engine: ProxEngine::new(ProxSpec::exact(params.inner_eta)?),
            base: problem.clone(),
            inner_problem,
            inner,
            params,
            y: x0.clone(),
            x_prev: x0,
            alpha: params.alpha0,
            t: 0,
            s: 0,
            max_alpha_residual: 0.0,
        })
    }

    pub fn params(&self) -> &CatalystParams {
        &self.params
    }

    /// Current inner SVRP iterate.
    pub fn point(&self) -> &Vector {
        &self.inner.x
    }

    /// Output of the most recent completed outer step (`x₀` before any).
    pub fn outer_point(&self) -> &Vector {
        &self.x_prev
    }

    pub fn extrapolated(&self) -> &Vector {
        &self.y
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn outer_steps(&self) -> usize {
        self.t
    }

    pub fn inner_steps(&self) -> usize {
        self.s
    }

    /// Largest α-recursion residual seen so far.
    pub fn max_alpha_residual(&self) -> f64 {
        self.max_alpha_residual
    }

    /// True once the scheduled number of outer steps has run.
    pub fn finished(&self) -> bool {
        self.t >= self.params.outer_iters
    }

    pub fn inner_problem(&self) -> &FederatedProblem {
        &self.inner_problem
    }

    /// One SVRP iteration on `h_t`; closes the outer step after
    /// `inner_iters` of them.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<CatalystStep> {
        let inner = svrp_step(
            &mut self.inner,
            &self.inner_problem,
            &self.engine,
            self.params.inner_p,
            rng,
        )?;
        self.s += 1;
        let outer_completed = self.s >= self.params.inner_iters;
        if outer_completed {
            self.close_outer_step()?;
        }
        Ok(CatalystStep {
            inner,
            outer_completed,
        })
    }

    fn close_outer_step(&mut self) -> Result<()> {
        let x = self.inner.x.clone();
        let alpha = alpha_update(self.alpha, self.params.q);
        self.max_alpha_residual = self
            .max_alpha_residual
            .max(alpha_residual(self.alpha, alpha, self.params.q));
        self.y = extrapolate(&x, &self.x_prev, self.alpha, alpha);
        self.alpha = alpha;
        self.x_prev = x.clone();
        self.t += 1;
        self.s = 0;
        self.inner_problem = self.base.shifted(self.params.gamma, &self.y);
        self.inner = SvrpState::new(&self.inner_problem, x)?;
        log::debug!(
            "catalyst outer step {} done, α={:.6e}, y moved by {:.3e}",
            self.t,
            alpha,
            (&self.y - &self.x_prev).norm()
        );
        Ok(())
    }
}

/// Per-outer-step record of [`catalyzed_svrp_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    pub t: usize,
    pub subopt: f64,
    pub sq_dist: f64,
    /// Communications charged up to the end of this outer step.
    pub comm_steps: u64,
    /// Catalyst target `ε_t = (2/9)(f(x₀) − f*)(1−ρ)^t`, logged only.
    pub eps_t: f64,
}

/// Trace of a full Catalyzed SVRP run.
#[derive(Debug, Clone)]
pub struct CatalystTrace {
    pub params: CatalystParams,
    pub records: Vec<OuterRecord>,
    pub final_point: Vector,
    pub max_alpha_residual: f64,
}

/// Runs Catalyzed SVRP from the origin with parameters from the problem's
/// constants, for `T_outer` outer steps or until `budget_override`
/// communications would be exceeded.
///
/// Communication follows the simulator's accounting: `3M` for the initial
/// synchronization, `2` per inner iteration, `3M` per anchor refresh and `3M`
/// at each outer step to re-anchor the clients on `x_t`.
pub fn catalyzed_svrp_run(
    problem: &FederatedProblem,
    eps: f64,
    budget_override: Option<u64>,
    seed: u64,
) -> Result<CatalystTrace> {
    use rand::SeedableRng;
    let consts = problem.constants(1e-10)?.clone();
    let x0 = Vector::zeros(problem.dim());
    let gap = problem.value(&x0)? - consts.f_star;
    let params = catalyst_params(
        consts.mu,
        consts.delta,
        problem.num_clients(),
        consts.smoothness,
        eps,
        gap,
    )?;
    let mut state = CatalystState::new(problem, params, x0)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let m = problem.num_clients() as u64;
    let mut comm = 3 * m;
    let budget = budget_override.unwrap_or(u64::MAX);
    let mut records = Vec::new();
    while !state.finished() {
        if comm + 2 + 6 * m > budget {
            break;
        }
        let step = state.step(&mut rng)?;
        comm += 2;
        if step.inner.anchor_refreshed {
            comm += 3 * m;
        }
        if step.outer_completed {
            comm += 3 * m;
            let x = state.outer_point();
            let eps_t = 2.0 / 9.0 * gap * (1.0 - params.rho).powi(state.outer_steps() as i32);
            let subopt = problem.value(x)? - consts.f_star;
            if subopt > eps_t {
                log::debug!("outer step {}: gap {subopt:e} above ε_t={eps_t:e}", state.outer_steps());
            }
            records.push(OuterRecord {
                t: state.outer_steps(),
                subopt,
                sq_dist: (x - &consts.x_star).norm_squared(),
                comm_steps: comm,
                eps_t,
            });
        }
    }
    Ok(CatalystTrace {
        params,
        records,
        final_point: state.outer_point().clone(),
        max_alpha_residual: state.max_alpha_residual(),
    })
}
