//! Closed-form analysis of ℓ²-regularized deep matrix factorization.
//!
//! Training a depth-`L` linear factorization `W_L ⋯ W_1 ≈ M` with squared
//! error and an ℓ² penalty on every layer is equivalent to a single matrix
//! problem with a Schatten-`2/L` penalty on the end-to-end product. That
//! problem decouples along singular values, and each one-dimensional piece
//! `(m − ρ)² + λ|ρ|^{2/L}` has an explicit minimizer with a sharp threshold
//! below which the solution is exactly zero.
//!
//! This crate provides:
//!
//! * [`prox`] — the exact scalar solver, its zero/nonzero threshold, and the
//!   closed-form Hessian spectrum of the factored scalar problem at minima;
//! * [`solver`] — the end-to-end matrix minimizer via per-singular-value
//!   thresholding, balanced factor stacks, and Hessian-trace bounds;
//! * [`train`] — the factored objective, its analytic gradient, plain
//!   gradient descent with grid search, and finite-difference Hessians;
//! * [`oracle`] — brute-force references (grid minimization, fiber sampling,
//!   numerical gradients) that the closed forms are validated against;
//! * [`verify`] — a self-contained property suite used by the CLI.
//!
//! All numerics are generic over the scalar type through [`Real`]; `f64` is
//! what the CLI and the verification suite use.

pub mod error;
pub mod io;
pub mod oracle;
pub mod prox;
mod scalar;
pub mod solver;
pub mod svd;
pub mod train;
pub mod types;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use oracle::{fiber_sample_oracle, finite_diff_gradient, prox_grid_oracle, GridSpec};
pub use prox::{
    collapse_threshold, critical_magnitude, prox_scalar, scalar_hessian_spectrum,
    stationary_root, ProxBranch, ProxResult, ScalarSpectrum,
};
pub use scalar::Real;
pub use solver::{
    balanced_factors, is_on_measure_zero_set, layer_norm_constant, objective_end2end,
    solve_closed_form, trace_lower_bound, FactorStack, MatrixSolution,
};
pub use svd::{schatten_q, svd_ordered, von_neumann_gap, OrderedSvd};
pub use train::{
    balance_gap, default_grid, desk_grid, gd_grid_search, gd_run, gradient, hessian_fd,
    hessian_trace_exact, objective, GdConfig, TrainTrace,
};
pub use types::{ProblemSpec, Tolerances};

/// Dense dynamically-sized matrix over the scalar `T`.
pub type Matrix<T> = nalgebra::DMatrix<T>;
/// Dense dynamically-sized column vector over the scalar `T`.
pub type Vector<T> = nalgebra::DVector<T>;

/// Double-precision aliases used by the CLI and most tests.
pub type Matrix64 = Matrix<f64>;
pub type Vector64 = Vector<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type Tolerances64 = Tolerances<f64>;
pub type FactorStack64 = FactorStack<f64>;
pub type GdConfig64 = GdConfig<f64>;
