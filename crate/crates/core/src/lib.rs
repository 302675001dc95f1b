//! Lorentz-force dynamics as auto-parallels of a velocity-dependent
//! connection, the fiber-averaged connection built from a distribution on
//! the unit hyperboloid, and a harness comparing both dynamics against
//! explicit divergence bounds.

// NaN-rejecting comparisons are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod connections;
pub mod dynamics;
mod error;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod kinetics;
pub mod ode;
pub mod quadrature;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Matrix, Tensor3, Vector};
