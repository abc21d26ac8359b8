//! Numerical laboratory for Wasserstein stability of nonlinear continuity equations in one
//! dimension: finite-volume solvers, exact 1D optimal transport, explicit stability bounds
//! and trajectory diagnostics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod flows;
pub mod kernels;
pub mod measures;
mod quad;
pub mod solvers;
pub mod transport;

pub use error::{Error, Result};
