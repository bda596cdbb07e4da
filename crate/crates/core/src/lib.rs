//! Stochastic proximal point methods for federated optimization under
//! second-order similarity.
//!
//! The crate is organised bottom-up:
//!
//! - [`problem`]: client objectives, the federated problem and its constants
//!   (μ, L, δ, σ*², x*).
//! - [`prox`]: exact and inexact proximal oracles.
//! - [`optim`]: single-step state machines for SPPM, SVRP, composite SVRP and
//!   gradient baselines, plus theorem-driven parameters.
//! - [`catalyst`]: the accelerated outer loop around SVRP.
//! - [`fedsim`]: client–server choreography with a communication ledger.
//! - [`data`]: synthetic generators, LIBSVM parsing and client partitioning.

// `!(x >= 0.0)` is used on purpose to reject NaN alongside negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod catalyst;
pub mod data;
pub mod error;
pub mod fedsim;
pub mod linalg;
pub mod optim;
pub mod problem;
pub mod prox;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use problem::{ClientObjective, FederatedProblem, ProblemConstants, Regularizer};
pub use prox::{ProxEngine, ProxMethod, ProxResult, ProxSpec};

/// The guide's chapters, compiled as doctests so their snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/problems.md")]
    struct Problems;
    #[doc = include_str!("../../../book/src/prox.md")]
    struct Prox;
    #[doc = include_str!("../../../book/src/algorithms.md")]
    struct Algorithms;
    #[doc = include_str!("../../../book/src/catalyst.md")]
    struct Catalyst;
    #[doc = include_str!("../../../book/src/simulation.md")]
    struct Simulation;
    #[doc = include_str!("../../../book/src/data.md")]
    struct Data;
    #[doc = include_str!("../../../book/src/lab.md")]
    struct Lab;
    #[doc = include_str!("../../../README.md")]
    struct Readme;
}
