//! Numerical tools for functional (path-dependent) fully coupled
//! forward-backward SDEs
//!
//! ```text
//! dX = b(X_t, Y, Z) dt + σ(X_t, Y, Z) dW,   X(0) = x0
//! dY = h(X_t, Y, Z) dt + Z dW,              Y(T) = g(X(T))
//! ```
//!
//! * [`paths`]: sampled paths, the `d∞` metric, vertical and horizontal path operations
//! * [`coefficients`]: coefficient sets, the `(Gᵀh, Gb, Gσ)` assembly, continuation family, built-in problems
//! * [`conditions`]: sampling estimators for Lipschitz and monotonicity constants
//! * [`solver`]: Euler–Maruyama forward pass, least-squares Monte Carlo backward pass, Picard and continuation loops
//! * [`ppde`]: finite-difference functional derivatives, Itô and path-dependent PDE residuals
//! * [`oracles`]: the Riccati reference solution for `example31`

pub mod coefficients;
pub mod conditions;
pub mod error;
pub mod oracles;
pub mod paths;
pub mod ppde;
pub mod solver;

pub use coefficients::{
    assemble_f, bracket, continuation_set, integral_lift, matrix_norm, registry_get, registry_names,
    CoefficientSet, Control, ControlPair, Dims, FTriple, Params,
};
pub use conditions::{AssumptionConstants, CheckReport, SamplerConfig};
pub use error::{Error, Result};
pub use paths::{Path, PathContext, PathFeature, PathPair, PathView};
pub use ppde::{PathFunctional, Smoothness};
pub use solver::{
    solve_fbsde, BrownianGrid, ContinuationMode, ContinuationSchedule, ConvergenceTrace, Discretization,
    SolutionEstimate,
};
