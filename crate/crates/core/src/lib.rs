//! Surrogate level-based Lagrangian relaxation for separable integer programs.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod detector;
pub mod engine;
pub mod error;
pub mod model;
pub mod parallel;
pub mod repair;
pub mod stepsize;
pub mod subproblem;
pub mod verify;

pub use error::{Error, Result};
pub use parallel::Execution;
