//! Sparse storage, relaxation sweeps, a dense direct-solve oracle and a
//! symmetric eigensolver.

mod csr;
mod dense;
mod eigen;
mod relax;

pub use csr::CsrMatrix;
pub use dense::{cholesky, dense_solve, DenseMatrix};
pub use eigen::{sym_eigen, EigenBasis};
pub use relax::{a_norm, gauss_seidel_sweep, jacobi_sweep, residual};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
