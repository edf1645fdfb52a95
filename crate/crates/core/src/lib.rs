//! Numerical laboratory for 1D semilinear heat equations with a nonlinear
//! dynamical boundary condition at the right endpoint and a Dirichlet
//! condition at the left one:
//!
//! ```text
//! u_t - u_xx = f(x, u)            in (0, T) x (0, L)
//! u(t, 0) = 0
//! u_x(t, L) = -Q(t, L, u_t(t, L))
//! u(0, x) = u_0(x)
//! ```
//!
//! The crate provides the nonlinearities and their hypothesis validators
//! ([`nonlinearity`]), a P1 finite-element discretization ([`mesh`]), the
//! variational constants and stable/unstable set classification ([`well`]),
//! a fully implicit backward-Euler stepper with an energy ledger
//! ([`stepper`]), and exact exponent arithmetic for the admissible blow-up
//! region ([`region`]).

pub mod error;
pub mod linalg;
pub mod mesh;
pub mod nonlinearity;
pub mod quadrature;
pub mod region;
pub mod stepper;
pub mod well;

pub use error::{CoreError, Result};
