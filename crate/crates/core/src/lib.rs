//! RBF-enhanced Crank-Nicolson time stepping for 1D linear parabolic problems.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod problem;
pub mod rbf;
pub mod shape;
pub mod stability;
pub mod startup;
pub mod stencil;

pub use error::{Error, Result};
