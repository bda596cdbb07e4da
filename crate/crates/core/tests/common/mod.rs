#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use svrp::{ClientObjective, FederatedProblem, Matrix, Regularizer, Vector};

pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_vec(rng: &mut impl Rng, d: usize) -> Vector {
    Vector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// `AᵀA/d + floor·I` with a Gaussian `A`.
pub fn random_spd(rng: &mut impl Rng, d: usize, floor: f64) -> Matrix {
    let a = gaussian(rng, d, d);
    let mut h = a.transpose() * &a / d as f64;
    for i in 0..d {
        h[(i, i)] += floor;
    }
    h
}

pub fn random_client(rng: &mut impl Rng, d: usize) -> ClientObjective {
    let h = random_spd(rng, d, 0.5);
    ClientObjective::quadratic(h, gaussian_vec(rng, d)).unwrap()
}

/// Quadratic clients sharing a base Hessian, perturbed by `spread`.
pub fn random_problem(seed: u64, m: usize, d: usize, spread: f64) -> FederatedProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = random_spd(&mut rng, d, 2.0);
    let clients = (0..m)
        .map(|_| {
            let e = gaussian(&mut rng, d, d);
            let h = &base + (&e + e.transpose()) * (spread / (2.0 * d as f64).sqrt());
            ClientObjective::quadratic(h, gaussian_vec(&mut rng, d)).unwrap()
        })
        .collect();
    FederatedProblem::new(clients, Regularizer::None).unwrap()
}

/// Clients `½(x−x°)ᵀH_m(x−x°)` with a common minimizer `x°`.
pub fn interpolation_problem(seed: u64, m: usize, d: usize) -> (FederatedProblem, Vector) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = gaussian_vec(&mut rng, d);
    let clients = (0..m)
        .map(|_| {
            let h = random_spd(&mut rng, d, 1.0);
            let c = -(&h * &x0);
            ClientObjective::quadratic(h, c).unwrap()
        })
        .collect();
    (FederatedProblem::new(clients, Regularizer::None).unwrap(), x0)
}
