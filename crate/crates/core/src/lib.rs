//! Surface finite-element solver and diagnostics for the prescribed Gaussian
//! curvature equation `-Δu + 2 = 2K e^u` on subdomains of the unit sphere
//! with homogeneous Neumann boundary conditions.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod parallel;

pub use error::{Error, Result};
pub mod bubbles;
pub mod cli;
pub mod diagnostics;
pub mod fem;
pub mod linalg;
pub mod output;
pub mod solvers;
pub mod variational;
