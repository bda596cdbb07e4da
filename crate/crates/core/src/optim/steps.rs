//! One-iteration updates. Every step draws the client index first and then,
//! for loopless methods, the anchor coin, so traces of different methods
//! consume the generator in the same order.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{all_finite, Vector};
use crate::problem::FederatedProblem;
use crate::prox::ProxEngine;

/// Iterate of a method without an anchor (SPPM, SGD).
#[derive(Debug, Clone, PartialEq)]
pub struct SppmState {
    pub x: Vector,
    pub k: usize,
}

impl SppmState {
    pub fn new(x0: Vector) -> Result<Self> {
        if !all_finite(&x0) {
            return Err(Error::InvalidParameter("initial point has non-finite entries".into()));
        }
        Ok(Self { x: x0, k: 0 })
    }
}

pub type SgdState = SppmState;

/// Iterate, anchor and cached full gradient of a loopless variance-reduced
/// method.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrpState {
    pub x: Vector,
    pub anchor: Vector,
    /// `∇f(anchor)`, refreshed together with the anchor.
    pub anchor_grad: Vector,
    pub k: usize,
}

impl SvrpState {
    /// Starts with `w₀ = x₀` and computes `∇f(w₀)`.
    pub fn new(problem: &FederatedProblem, x0: Vector) -> Result<Self> {
        check_dim(problem.dim(), x0.len())?;
        if !all_finite(&x0) {
            return Err(Error::InvalidParameter("initial point has non-finite entries".into()));
        }
        let anchor_grad = problem.full_grad(&x0)?;
        Ok(Self {
            anchor: x0.clone(),
            x: x0,
            anchor_grad,
            k: 0,
        })
    }
}

pub type LsvrgState = SvrpState;

/// Iterate and per-client control variates of the SCAFFOLD-style baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaffoldState {
    pub x: Vector,
    pub controls: Vec<Vector>,
    pub control_mean: Vector,
    pub k: usize,
}

impl ScaffoldState {
    /// All controls start at zero.
    pub fn new(problem: &FederatedProblem, x0: Vector) -> Result<Self> {
        check_dim(problem.dim(), x0.len())?;
        let d = problem.dim();
        Ok(Self {
            x: x0,
            controls: vec![Vector::zeros(d); problem.num_clients()],
            control_mean: Vector::zeros(d),
            k: 0,
        })
    }
}

/// What happened during one step; the simulator turns this into messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub client: usize,
    pub anchor_refreshed: bool,
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("p={p} must lie in (0, 1]")))
    }
}

fn sample_client<R: Rng + ?Sized>(problem: &FederatedProblem, rng: &mut R) -> usize {
    rng.random_range(0..problem.num_clients())
}

fn flip<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// `x_{k+1} ≃ prox_{ηf_m}(x_k)` for a uniformly drawn client `m`.
pub fn sppm_step<R: Rng + ?Sized>(
    state: &mut SppmState,
    problem: &FederatedProblem,
    prox: &ProxEngine,
    rng: &mut R,
) -> Result<StepOutcome> {
    let m = sample_client(problem, rng);
    state.x = prox.apply(problem, m, &state.x)?.point;
    state.k += 1;
    Ok(StepOutcome {
        client: m,
        anchor_refreshed: false,
    })
}

fn svrp_like<R: Rng + ?Sized>(
    state: &mut SvrpState,
    problem: &FederatedProblem,
    prox: &ProxEngine,
    p: f64,
    composite: bool,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_p(p)?;
    let m = sample_client(problem, rng);
    let client = problem.client(m);
    let mut z = state.x.clone();
    let g = &state.anchor_grad - client.grad(&state.anchor)?;
    z.axpy(-prox.eta(), &g, 1.0);
    let next = if composite {
        prox.apply_composite(problem, m, &z)?
    } else {
        prox.apply(problem, m, &z)?
    };
    state.x = next.point;
    let refresh = flip(p, rng);
    if refresh {
        state.anchor = state.x.clone();
        state.anchor_grad = problem.full_grad(&state.anchor)?;
    }
    state.k += 1;
    Ok(StepOutcome {
        client: m,
        anchor_refreshed: refresh,
    })
}

/// One SVRP iteration: `g = ∇f(w) − ∇f_m(w)`,
/// `x⁺ ≃ prox_{ηf_m}(x − ηg)`, then with probability `p` the anchor moves to
/// `x⁺` and its full gradient is recomputed.
pub fn svrp_step<R: Rng + ?Sized>(
    state: &mut SvrpState,
    problem: &FederatedProblem,
    prox: &ProxEngine,
    p: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    svrp_like(state, problem, prox, p, false, rng)
}

/// SVRP with the prox taken over `ηf_m + ηR` for the problem's regularizer.
pub fn svrp_composite_step<R: Rng + ?Sized>(
    state: &mut SvrpState,
    problem: &FederatedProblem,
    prox: &ProxEngine,
    p: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    svrp_like(state, problem, prox, p, true, rng)
}

/// `V = ‖x − x*‖² + (ημ/p)‖w − x*‖²`.
pub fn lyapunov(state: &SvrpState, x_star: &Vector, eta: f64, mu: f64, p: f64) -> f64 {
    (&state.x - x_star).norm_squared() + eta * mu / p * (&state.anchor - x_star).norm_squared()
}

/// `x_{k+1} = x_k − η∇f_m(x_k)`.
pub fn sgd_step<R: Rng + ?Sized>(
    state: &mut SgdState,
    problem: &FederatedProblem,
    eta: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    let m = sample_client(problem, rng);
    let g = problem.client(m).grad(&state.x)?;
    state.x.axpy(-eta, &g, 1.0);
    state.k += 1;
    Ok(StepOutcome {
        client: m,
        anchor_refreshed: false,
    })
}

/// Loopless SVRG: `x⁺ = x − η(∇f_m(x) − ∇f_m(w) + ∇f(w))` with the same coin
/// and anchor refresh as SVRP.
pub fn lsvrg_step<R: Rng + ?Sized>(
    state: &mut LsvrgState,
    problem: &FederatedProblem,
    eta: f64,
    p: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    check_p(p)?;
    let m = sample_client(problem, rng);
    let client = problem.client(m);
    let estimate = client.grad(&state.x)? - client.grad(&state.anchor)? + &state.anchor_grad;
    state.x.axpy(-eta, &estimate, 1.0);
    let refresh = flip(p, rng);
    if refresh {
        state.anchor = state.x.clone();
        state.anchor_grad = problem.full_grad(&state.anchor)?;
    }
    state.k += 1;
    Ok(StepOutcome {
        client: m,
        anchor_refreshed: refresh,
    })
}

/// Control-variate SGD: `x⁺ = x − η(∇f_m(x) − c_m + c̄)`, after which the
/// participating client sets `c_m = ∇f_m(x)` and `c̄` is updated in place.
pub fn scaffold_step<R: Rng + ?Sized>(
    state: &mut ScaffoldState,
    problem: &FederatedProblem,
    eta: f64,
    rng: &mut R,
) -> Result<StepOutcome> {
    let m = sample_client(problem, rng);
    let grad = problem.client(m).grad(&state.x)?;
    let direction = &grad - &state.controls[m] + &state.control_mean;
    state.x.axpy(-eta, &direction, 1.0);
    let inv_m = 1.0 / problem.num_clients() as f64;
    state.control_mean.axpy(inv_m, &(&grad - &state.controls[m]), 1.0);
    state.controls[m] = grad;
    state.k += 1;
    Ok(StepOutcome {
        client: m,
        anchor_refreshed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::problem::{ClientObjective, Regularizer};
    use crate::prox::ProxSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn random_problem(m: usize, d: usize, seed: u64) -> FederatedProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients = (0..m)
            .map(|_| {
                let z = Matrix::from_fn(2 * d, d, |_, _| StandardNormal.sample(&mut rng));
                let y = Vector::from_fn(2 * d, |_, _| StandardNormal.sample(&mut rng));
                ClientObjective::dataset_ridge(z, y, 0.3).unwrap()
            })
            .collect();
        FederatedProblem::new(clients, Regularizer::None).unwrap()
    }

    fn scalar_problem(hs: &[(f64, f64)]) -> FederatedProblem {
        let clients = hs
            .iter()
            .map(|&(h, c)| ClientObjective::quadratic(Matrix::from_element(1, 1, h), v(&[c])).unwrap())
            .collect();
        FederatedProblem::new(clients, Regularizer::None).unwrap()
    }

    #[test]
    fn svrp_fixed_point() {
        let p = random_problem(4, 3, 1);
        let x_star = p.constants(1e-10).unwrap().x_star.clone();
        let engine = ProxEngine::new(ProxSpec::exact(0.4).unwrap());
        let mut s = SvrpState::new(&p, x_star.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            svrp_step(&mut s, &p, &engine, 0.25, &mut rng).unwrap();
            assert!((&s.x - &x_star).norm() < 1e-10);
        }
    }

    #[test]
    fn svrp_matches_sppm_for_one_client() {
        let p = random_problem(1, 4, 2);
        let engine = ProxEngine::new(ProxSpec::exact(0.7).unwrap());
        let x0 = v(&[1.0, -1.0, 2.0, 0.5]);
        let mut a = SvrpState::new(&p, x0.clone()).unwrap();
        let mut b = SppmState::new(x0).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            svrp_step(&mut a, &p, &engine, 0.5, &mut r1).unwrap();
            sppm_step(&mut b, &p, &engine, &mut r2).unwrap();
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn svrp_correction_is_unbiased() {
        let p = random_problem(5, 3, 4);
        let x_star = p.constants(1e-10).unwrap().x_star.clone();
        let s = SvrpState::new(&p, v(&[0.3, -2.0, 1.0])).unwrap();
        let mut mean = Vector::zeros(3);
        for c in p.clients() {
            let g = &s.anchor_grad - c.grad(&s.anchor).unwrap();
            mean += g + c.grad(&x_star).unwrap();
        }
        assert!((mean / 5.0).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let p = random_problem(2, 2, 5);
        let x_star = v(&[0.5, 0.5]);
        let s = SvrpState::new(&p, x_star.clone()).unwrap();
        assert_eq!(lyapunov(&s, &x_star, 1.0, 1.0, 0.5), 0.0);
        let s = SvrpState::new(&p, v(&[1.5, 0.5])).unwrap();
        assert!((lyapunov(&s, &x_star, 0.5, 2.0, 0.25) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn sgd_hand_simulation() {
        // f₁ = x², f₂ = (x − 1)²; both draws recorded from the generator.
        let p = scalar_problem(&[(2.0, 0.0), (2.0, -2.0)]);
        let mut s = SgdState::new(v(&[1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut probe = rng.clone();
        let draws: Vec<usize> = (0..3).map(|_| probe.random_range(0..2)).collect();
        let mut x = 1.0;
        for &m in &draws {
            let grad = if m == 0 { 2.0 * x } else { 2.0 * x - 2.0 };
            x -= 0.1 * grad;
        }
        for _ in 0..3 {
            sgd_step(&mut s, &p, 0.1, &mut rng).unwrap();
        }
        assert_eq!(s.x[0], x);

        let mut frozen = SgdState::new(v(&[1.0])).unwrap();
        sgd_step(&mut frozen, &p, 0.0, &mut rng).unwrap();
        assert_eq!(frozen.x[0], 1.0);
    }

    #[test]
    fn lsvrg_single_client_is_gradient_descent() {
        let p = random_problem(1, 3, 6);
        let eta = 1.0 / (2.0 * p.client(0).smoothness());
        let mut s = LsvrgState::new(&p, v(&[1.0, 2.0, 3.0])).unwrap();
        let mut x = v(&[1.0, 2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            lsvrg_step(&mut s, &p, eta, 0.3, &mut rng).unwrap();
            x -= p.full_grad(&x).unwrap() * eta;
            assert!((&s.x - &x).norm() <= 1e-12);
        }
    }

    #[test]
    fn lsvrg_estimator_is_unbiased_and_fixed_at_optimum() {
        let p = random_problem(4, 3, 7);
        let x_star = p.constants(1e-10).unwrap().x_star.clone();
        let s = LsvrgState::new(&p, v(&[1.0, 0.0, -1.0])).unwrap();
        let x = v(&[0.2, 0.4, 0.6]);
        let mut mean = Vector::zeros(3);
        for c in p.clients() {
            mean += c.grad(&x).unwrap() - c.grad(&s.anchor).unwrap() + &s.anchor_grad;
        }
        assert!((mean / 4.0 - p.full_grad(&x).unwrap()).norm() < 1e-12);

        let mut at_opt = LsvrgState::new(&p, x_star.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            lsvrg_step(&mut at_opt, &p, 0.01, 0.5, &mut rng).unwrap();
        }
        assert!((&at_opt.x - &x_star).norm() < 1e-10);
    }

    #[test]
    fn scaffold_first_step_is_sgd() {
        let p = random_problem(3, 2, 8);
        let x0 = v(&[1.0, -1.0]);
        let mut a = ScaffoldState::new(&p, x0.clone()).unwrap();
        let mut b = SgdState::new(x0).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = r1.clone();
        scaffold_step(&mut a, &p, 0.05, &mut r1).unwrap();
        sgd_step(&mut b, &p, 0.05, &mut r2).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn scaffold_fixed_point_with_optimal_controls() {
        let p = random_problem(3, 2, 9);
        let x_star = p.constants(1e-10).unwrap().x_star.clone();
        let mut s = ScaffoldState::new(&p, x_star.clone()).unwrap();
        s.controls = p.clients().iter().map(|c| c.grad(&x_star).unwrap()).collect();
        s.control_mean = p.full_grad(&x_star).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            scaffold_step(&mut s, &p, 0.05, &mut rng).unwrap();
        }
        assert!((&s.x - &x_star).norm() < 1e-12);
    }

    #[test]
    fn scaffold_two_client_hand_simulation() {
        let p = scalar_problem(&[(2.0, 0.0), (2.0, -2.0)]);
        let mut s = ScaffoldState::new(&p, v(&[1.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut probe = rng.clone();
        let draws: Vec<usize> = (0..3).map(|_| probe.random_range(0..2)).collect();
        let (mut x, mut c, eta) = (1.0f64, [0.0f64; 2], 0.1);
        for &m in &draws {
            let grad = if m == 0 { 2.0 * x } else { 2.0 * x - 2.0 };
            let mean = (c[0] + c[1]) / 2.0;
            x -= eta * (grad - c[m] + mean);
            c[m] = grad;
        }
        for _ in 0..3 {
            scaffold_step(&mut s, &p, eta, &mut rng).unwrap();
        }
        assert!((s.x[0] - x).abs() < 1e-15);
        assert_eq!(s.controls[0][0], c[0]);
        assert_eq!(s.controls[1][0], c[1]);
    }

    #[test]
    fn composite_without_regularizer_matches_plain() {
        let p = random_problem(3, 3, 10);
        let engine = ProxEngine::new(ProxSpec::exact(0.3).unwrap());
        let x0 = v(&[1.0, 1.0, 1.0]);
        let mut a = SvrpState::new(&p, x0.clone()).unwrap();
        let mut b = SvrpState::new(&p, x0).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(13);
        let mut r2 = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            svrp_step(&mut a, &p, &engine, 0.3, &mut r1).unwrap();
            svrp_composite_step(&mut b, &p, &engine, 0.3, &mut r2).unwrap();
        }
        assert_eq!(a, b);
    }

    #[test]
    fn sppm_interpolation_contracts_every_step() {
        let x_star = v(&[1.0, -2.0]);
        let clients = (0..3)
            .map(|i| {
                let h = Matrix::from_diagonal(&v(&[1.0 + i as f64, 2.0]));
                let c = -(&h * &x_star);
                ClientObjective::quadratic(h, c).unwrap()
            })
            .collect();
        let p = FederatedProblem::new(clients, Regularizer::None).unwrap();
        let eta = 0.5;
        let mu = p.constants(1e-10).unwrap().mu;
        let engine = ProxEngine::new(ProxSpec::exact(eta).unwrap());
        let mut s = SppmState::new(v(&[5.0, 5.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..50 {
            let before = (&s.x - &x_star).norm();
            sppm_step(&mut s, &p, &engine, &mut rng).unwrap();
            assert!((&s.x - &x_star).norm() <= before / (1.0 + eta * mu) * (1.0 + 1e-12) + 1e-15);
        }
    }

    #[test]
    fn rejects_bad_probability() {
        let p = random_problem(2, 2, 15);
        let engine = ProxEngine::new(ProxSpec::exact(0.3).unwrap());
        let mut s = SvrpState::new(&p, v(&[0.0, 0.0])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(svrp_step(&mut s, &p, &engine, 0.0, &mut rng).is_err());
        assert!(lsvrg_step(&mut s, &p, 0.1, 1.1, &mut rng).is_err());
    }
}
