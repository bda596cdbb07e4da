//! Stepsizes, accuracies and iteration budgets from the convergence theorems.

use crate::error::{Error, Result};

/// `η` is capped at `ETA_CAP_FACTOR / μ` when the theorem formula explodes.
pub const ETA_CAP_FACTOR: f64 = 1e6;

/// Parameters of a stochastic proximal point run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremParams {
    pub eta: f64,
    /// Anchor refresh probability (1 for SPPM, which keeps no anchor).
    pub p: f64,
    /// Prox accuracy `b`.
    pub b: f64,
    /// Per-iteration contraction of the expected Lyapunov value.
    pub tau: f64,
    /// Iterations that guarantee `E‖x_K − x*‖² ≤ ε`.
    pub iterations: usize,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name}={v} must be positive and finite")))
    }
}

fn ceil_log_budget(rate_inv: f64, log_arg: f64) -> usize {
    if log_arg <= 1.0 {
        0
    } else {
        (rate_inv * log_arg.ln()).ceil() as usize
    }
}

/// `η_cap = 1e6/μ`.
pub fn eta_cap(mu: f64) -> f64 {
    ETA_CAP_FACTOR / mu
}

/// SPPM parameters: `η = με/(2σ*²)`, `b = (ε/4)(ημ)²/(1+ημ)²` and
/// `K = ⌈((1+ημ)/(ημ))·ln(4‖x₀ − x*‖²/ε)⌉`.
///
/// With `σ*² = 0` (interpolation) the stepsize is the cap `1e6/μ`.
pub fn sppm_params(mu: f64, sigma_star_sq: f64, eps: f64, dist0_sq: f64) -> Result<TheoremParams> {
    check_positive("μ", mu)?;
    check_positive("ε", eps)?;
    if !(sigma_star_sq >= 0.0) || !(dist0_sq >= 0.0) {
        return Err(Error::InvalidParameter("σ*² and ‖x₀ − x*‖² must be ≥ 0".into()));
    }
    let eta = if sigma_star_sq > 0.0 {
        (mu * eps / (2.0 * sigma_star_sq)).min(eta_cap(mu))
    } else {
        eta_cap(mu)
    };
    sppm_params_with_eta(mu, eta, eps, dist0_sq)
}

/// SPPM parameters for a given stepsize.
pub fn sppm_params_with_eta(mu: f64, eta: f64, eps: f64, dist0_sq: f64) -> Result<TheoremParams> {
    check_positive("μ", mu)?;
    check_positive("η", eta)?;
    check_positive("ε", eps)?;
    let em = eta * mu;
    let ratio = em / (1.0 + em);
    Ok(TheoremParams {
        eta,
        p: 1.0,
        b: eps / 4.0 * ratio * ratio,
        tau: ratio,
        iterations: ceil_log_budget(1.0 / ratio, 4.0 * dist0_sq / eps),
    })
}

/// SVRP parameters: `η = μ/(2δ²)` (capped), `p = 1/M`,
/// `τ = min{ημ/(1+2ημ), p/2}`, `b = ετ(ημ)²/(2(1+ημ)³)` and
/// `K = ⌈(1/τ)·ln(2‖x₀ − x*‖²(1 + ημ/p)/ε)⌉`.
pub fn svrp_params(
    mu: f64,
    delta: f64,
    num_clients: usize,
    eps: f64,
    dist0_sq: f64,
) -> Result<TheoremParams> {
    check_positive("μ", mu)?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!("δ={delta} must be ≥ 0")));
    }
    if num_clients == 0 {
        return Err(Error::InvalidParameter("M must be ≥ 1".into()));
    }
    let eta = if delta > 0.0 {
        (mu / (2.0 * delta * delta)).min(eta_cap(mu))
    } else {
        eta_cap(mu)
    };
    svrp_params_with(mu, eta, 1.0 / num_clients as f64, eps, dist0_sq)
}

/// SVRP parameters for a given stepsize and refresh probability.
pub fn svrp_params_with(
    mu: f64,
    eta: f64,
    p: f64,
    eps: f64,
    dist0_sq: f64,
) -> Result<TheoremParams> {
    check_positive("μ", mu)?;
    check_positive("η", eta)?;
    check_positive("ε", eps)?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p={p} must lie in (0, 1]")));
    }
    let em = eta * mu;
    let tau = (em / (1.0 + 2.0 * em)).min(p / 2.0);
    let b = eps * tau * em * em / (2.0 * (1.0 + em).powi(3));
    let iterations = ceil_log_budget(1.0 / tau, 2.0 * dist0_sq * (1.0 + em / p) / eps);
    Ok(TheoremParams {
        eta,
        p,
        b,
        tau,
        iterations,
    })
}

/// Default SGD stepsize `1/(2L)`.
pub fn sgd_default_stepsize(smoothness: f64) -> f64 {
    1.0 / (2.0 * smoothness)
}

/// Default L-SVRG and SCAFFOLD stepsize `1/(6L)`.
pub fn lsvrg_default_stepsize(smoothness: f64) -> f64 {
    1.0 / (6.0 * smoothness)
}

/// Iterates the worst case of `r_{k+1} ≤ (r_k + c)/(1+θ)` for `k` steps.
pub fn iterate_recurrence(r0: f64, theta: f64, c: f64, k: usize) -> f64 {
    (0..k).fold(r0, |r, _| (r + c) / (1.0 + theta))
}

/// Closed-form bound `r_K ≤ r₀/(1+θ)^K + min{K/(1+θ), 1/θ}·c`.
pub fn recurrence_bound(r0: f64, theta: f64, c: f64, k: usize) -> f64 {
    let kf = k as f64;
    r0 / (1.0 + theta).powf(kf) + (kf / (1.0 + theta)).min(1.0 / theta) * c
}
