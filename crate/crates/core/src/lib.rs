//! Generative augmented inference for generalized linear models.
//!
//! Estimates a (possibly misspecified) GLM from a dataset in which only some
//! rows carry a human label while every row carries an AI-generated auxiliary
//! signal `z`. The estimator solves a Neyman-orthogonal score built from
//! cross-fitted nuisances `g(X, z) ≈ E[y | X, z]` and `e(X, z) ≈ P(w = 1 | X, z)`.

// `!(a <= b)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod evalharness;
pub mod family;
pub mod io;
pub mod nuisance;
pub mod rng;
pub mod solver;

pub use data::{Dataset, Design, DesignRow};
pub use error::{GaiError, Result};
pub use family::GlmFamily;
pub use solver::{fit_score_equation, FitResult, SolverOptions, Termination};
