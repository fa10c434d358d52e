//! Optimal design and control of a permanently magnetized planar cantilever
//! elastica.
//!
//! Given target shapes `θ̄_i`, the crate computes a magnetization profile `α`
//! and applied fields `h_i` whose equilibrium shapes best approximate the
//! targets, by two nested fixed-point loops on the Lagrange-multiplier
//! system, and cross-checks the result with a direct adjoint-gradient
//! minimizer and a set of analytic oracles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bvp;
pub mod error;
pub mod magneto;
pub mod mesh;
pub mod program;
mod tridiag;

pub use bvp::{SLSpectrum, SolveOptions};
pub use error::{Error, Result};
pub use magneto::{Control, ControlSet, PhysicalScaling};
pub use mesh::{FieldRole, Grid, ScalarField};
