mod common;

use svrp::data::{generate_synthetic, SyntheticSpec};
use svrp::problem::{compute_constants, estimate_delta, hessian_deviation, max_similarity_ratio};
use svrp::{Matrix, Vector};

use common::random_problem;

/// Dense eigendecomposition of the deviation matrix, built independently of
/// the crate's `hessian_deviation`.
fn dense_delta(problem: &svrp::FederatedProblem) -> f64 {
    let hs: Vec<Matrix> = problem.clients().iter().map(|c| c.hessian().unwrap()).collect();
    let m = hs.len() as f64;
    let mean = hs.iter().fold(Matrix::zeros(problem.dim(), problem.dim()), |a, h| a + h) / m;
    let dev = hs
        .iter()
        .map(|h| {
            let e = h - &mean;
            &e * &e
        })
        .fold(Matrix::zeros(problem.dim(), problem.dim()), |a, b| a + b)
        / m;
    dev.symmetric_eigen().eigenvalues.max().sqrt()
}

#[test]
fn delta_matches_dense_oracle() {
    for (seed, m, d) in [(1, 2, 3), (2, 5, 10), (3, 8, 20), (4, 3, 30), (5, 12, 7)] {
        let p = random_problem(seed, m, d, 0.7);
        let est = estimate_delta(&p, 1e-12).unwrap();
        let oracle = dense_delta(&p);
        assert!((est - oracle).abs() <= 1e-6 * oracle, "{est} vs {oracle}");
        let dev = hessian_deviation(&p).unwrap();
        assert!(dev.symmetric_eigen().eigenvalues.min() >= -1e-12);
    }
}

#[test]
fn similarity_bound_holds_at_delta() {
    let p = random_problem(7, 6, 8, 1.0);
    let delta = estimate_delta(&p, 1e-12).unwrap();
    let worst = max_similarity_ratio(&p, 200, 11).unwrap();
    assert!(worst <= delta * delta * (1.0 + 1e-9), "{worst} > {}", delta * delta);
}

#[test]
fn gradients_match_finite_differences() {
    let p = random_problem(8, 3, 6, 0.5);
    let x = Vector::from_fn(6, |i, _| (i as f64 * 0.37).sin());
    let h = 1e-6;
    for client in p.clients() {
        let g = client.grad(&x).unwrap();
        for i in 0..6 {
            let mut e = Vector::zeros(6);
            e[i] = h;
            let fd = (client.value(&(&x + &e)).unwrap() - client.value(&(&x - &e)).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()));
        }
    }
}

#[test]
fn constants_are_consistent() {
    let p = random_problem(9, 5, 6, 0.5);
    let c = compute_constants(&p, 1e-12).unwrap();
    assert!(p.full_grad(&c.x_star).unwrap().norm() < 1e-10);
    let sigma: f64 = p
        .clients()
        .iter()
        .map(|m| m.grad(&c.x_star).unwrap().norm_squared())
        .sum::<f64>()
        / 5.0;
    assert!((sigma - c.sigma_star_sq).abs() <= 1e-10 * sigma.max(1.0));
    let (hbar, _) = p.mean_quadratic().unwrap();
    let l = hbar.symmetric_eigen().eigenvalues.max();
    assert!((c.smoothness - l).abs() <= 1e-8 * l);
    let mu = p
        .clients()
        .iter()
        .map(|m| m.hessian().unwrap().symmetric_eigen().eigenvalues.min())
        .fold(f64::INFINITY, f64::min);
    assert!((c.mu - mu).abs() <= 1e-8 * mu);
}

#[test]
fn synthetic_generator_hits_targets() {
    let spec = SyntheticSpec {
        num_clients: 200,
        dim: 50,
        delta: 10.0,
        smoothness: 3000.0,
        lambda: 1.0,
        noise_std: 1.0,
        samples_per_client: None,
        seed: 2024,
    };
    let p = generate_synthetic(&spec).unwrap();
    let c = compute_constants(&p, 1e-12).unwrap();
    assert!((9.99..=10.01).contains(&c.delta), "δ={}", c.delta);
    assert!((2970.0..=3030.0).contains(&c.smoothness), "L={}", c.smoothness);
    assert!(c.mu >= 1.0 - 1e-9);
    let worst = max_similarity_ratio(&p, 20, 1).unwrap();
    assert!(worst <= c.delta * c.delta * (1.0 + 1e-9));
}
