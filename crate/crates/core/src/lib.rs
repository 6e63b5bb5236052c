//! Monotone schemes for nonlocal HJB variational inequalities: mixed optimal
//! stopping and control of jump diffusions under a nonlinear expectation,
//! solved through a switching system with piecewise constant policies.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod banded;
pub mod error;
pub mod exec;
pub mod grid;
pub mod levy;
pub mod model;
pub mod ops;
pub mod quad;
pub mod solver;
pub mod study;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use grid::{ExteriorExtension, SpaceTimeGrid};
pub use levy::LevyMeasure;
pub use model::{
    discretize_controls, recursive_utility_spec, BenchmarkParams, ControlGrid, Driver,
    DriverConstants, LinearOdeParams, ProblemSpec,
};
pub use solver::{solve, Discretization, SchemeParams, SolveResult, SolveStats};
