//! L^q best approximation by continuous piecewise-linear finite elements.
//!
//! The crate computes best approximations of discontinuous and smooth
//! targets for `1 < q < ∞` by continuation Newton, certifies L¹ optimality
//! of candidate functions through a dual witness, and evaluates the
//! closed-form overshoot results for one- and two-dimensional model meshes.

pub mod certify;
pub mod error;
pub mod fespace;
pub mod mesh;
pub mod quadrature;
pub mod signsplit;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
