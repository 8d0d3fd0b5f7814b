//! Explicit-implicit-null (EIN) local discontinuous Galerkin solvers for
//! one-dimensional nonlinear diffusion `u_t = (a(u) u_x)_x`.
//!
//! The diffusion term is split as `[(a(u) u_x)_x - a0 u_xx] + a0 u_xx`; the
//! bracket is advanced explicitly and the constant-coefficient term
//! implicitly, so the implicit matrix is factored once per `(a0, dt)` pair.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fem;
pub mod imex;
pub mod implicit_solver;
pub mod ldg;
pub mod limiter;
pub mod poisson;
pub mod problems;

pub use error::{Error, Result};
