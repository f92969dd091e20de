//! Numerical laboratory for the variable-coefficient thin obstacle (Signorini)
//! problem and the associated degenerate elliptic model equation in slit
//! domains.
//!
//! The crate is organised around the analytic objects it manipulates:
//!
//! - [`geom`]: slit-domain geometry — the weights `rho`, `xi`, `eta`, the
//!   square-root opening map, homogeneous solutions, the slit path metric,
//!   cones and the boundary-straightening coordinate change.
//! - [`coeff`]: matrix coefficient fields `A = A_D + x_{n+1} A_O` with the
//!   even/odd block structure, and their pullback under straightening.
//! - [`grid`]: tensor grids in physical `(x^T, x_n, x_{n+1})` or square-root
//!   `(x^T, xi, eta)` coordinates, and scalar fields sampled on them.
//! - [`wspace`]: weighted quadrature and the inequality checkers
//!   (Poincare, Hardy, Caccioppoli, Campanato deviations).
//! - [`dsolve`]: FEM discretisation and CG solvers for the degenerate
//!   equation `div(xi^2 A grad w) = div(xi^2 f) + xi^2 g` and the uniform
//!   equation with zero slit trace; harmonic replacement, linearization and
//!   the Campanato iteration.
//! - [`signorini`]: projected-SOR variational inequality solver in physical
//!   coordinates, free-boundary extraction, Almgren frequency and blow-ups.
//! - [`analysis`]: property-(F) checkers, ratio fields, Hopf and boundary
//!   Harnack experiments, and the end-to-end free-boundary regularity
//!   pipeline.
//!
//! The crate is `no_std` (with `alloc`); IO, file formats and the CLI live in
//! the companion `slitlab` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod coeff;
pub mod defaults;
pub mod dsolve;
pub mod error;
pub mod fields;
pub mod geom;
pub mod grid;
pub mod signorini;
pub mod sparse;
pub mod wspace;

pub use error::{Error, Result};
