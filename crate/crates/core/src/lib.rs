//! Hybrid iterative solver combining Gauss-Seidel relaxation with DeepONet
//! correction steps, for P1 finite-element discretizations of Darcy flow and
//! plane-strain elasticity on 2D triangular meshes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deeponet;
pub mod error;
pub mod fem;
pub mod field;
pub mod hints;
pub mod linalg;
pub mod mesh;
pub mod problem;
pub mod transfer;

pub use error::{Error, Result};
