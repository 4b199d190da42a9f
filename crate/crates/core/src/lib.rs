//! Numerical laboratory for slowly non-dissipative quasilinear parabolic
//! equations
//!
//! ```text
//! u_t = a(x, u, u_x) u_xx + b u + f(x, u, u_x),   x in [0, pi],  Neumann,
//! ```
//!
//! with `b > 0` and bounded `f`. Solutions either converge to a bounded
//! equilibrium or grow up as `t -> infinity`. The crate computes bounded
//! equilibria and their spectra, the equilibria at infinity `+-Phi_j`, the
//! flow induced on the sphere at infinity, and the predicted connection graph
//! of the unbounded attractor, which it then checks by direct simulation.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attractor;
pub mod cli;
pub mod coeff;
pub mod config;
pub mod equilibria;
pub mod error;
pub mod expr;
pub mod field;
pub mod infinity;
pub mod integrator;
mod linalg;

pub use error::{Error, Result};
pub use field::{SpatialGrid, StateField};
