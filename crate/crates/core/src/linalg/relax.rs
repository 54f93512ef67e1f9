use crate::error::{Error, Result};

use super::CsrMatrix;

fn check_dims(a: &CsrMatrix, b: &[f64], u: &[f64]) -> Result<()> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch { what: "square matrix", expected: n, got: a.n_cols() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { what: "right-hand side", expected: n, got: b.len() });
    }
    if u.len() != n {
        return Err(Error::DimensionMismatch { what: "iterate", expected: n, got: u.len() });
    }
    Ok(())
}

/// One forward Gauss-Seidel sweep in natural order, updating `u` in place.
pub fn gauss_seidel_sweep(a: &CsrMatrix, b: &[f64], u: &mut [f64]) -> Result<()> {
    check_dims(a, b, u)?;
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let mut sum = b[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            } else {
                sum -= v * u[j];
            }
        }
        if diag == 0.0 {
            return Err(Error::ZeroDiagonal(i));
        }
        u[i] = sum / diag;
    }
    Ok(())
}

/// Damped Jacobi: `u + ω D⁻¹ (b − A u)`, all updates from the old iterate.
pub fn jacobi_sweep(a: &CsrMatrix, b: &[f64], u: &[f64], omega: f64) -> Result<Vec<f64>> {
    check_dims(a, b, u)?;
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::InvalidParameter(format!("jacobi damping must lie in [0, 1], got {omega}")));
    }
    let mut out = u.to_vec();
    for (i, o) in out.iter_mut().enumerate() {
        let (cols, vals) = a.row(i);
        let mut r = b[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            if j == i {
                diag = v;
            }
            r -= v * u[j];
        }
        if diag == 0.0 {
            return Err(Error::ZeroDiagonal(i));
        }
        *o += omega * r / diag;
    }
    Ok(out)
}

/// `b − A u`.
pub fn residual(a: &CsrMatrix, b: &[f64], u: &[f64]) -> Vec<f64> {
    let au = a.matvec(u);
    b.iter().zip(au).map(|(bi, ai)| bi - ai).collect()
}

/// Energy norm `sqrt(eᵀ A e)`.
pub fn a_norm(a: &CsrMatrix, e: &[f64]) -> f64 {
    super::dot(e, &a.matvec(e)).max(0.0).sqrt()
}
