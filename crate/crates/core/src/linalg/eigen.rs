use crate::error::{Error, Result};

use super::DenseMatrix;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[i]` pairs with `eigenvalues[i]`; unit length.
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenBasis {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
}

/// Cyclic Jacobi eigensolver.
///
/// Each eigenvector is normalized so that its largest-magnitude component is
/// positive.
pub fn sym_eigen(a: &DenseMatrix) -> Result<EigenBasis> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch { what: "sym_eigen: square matrix", expected: n, got: a.n_cols() });
    }
    let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let defect = a.symmetry_defect();
    if defect > 1e-10 * scale.max(1.0) {
        return Err(Error::NotSymmetric(defect));
    }

    let mut m = a.clone();
    // rows of `vt` are the eigenvector estimates
    let mut vt = DenseMatrix::identity(n);
    let mut row_p = vec![0.0; n];
    let mut row_q = vec![0.0; n];

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .map(|i| m.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v * v).sum::<f64>())
            .sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // skip rotations that cannot change the diagonal in floating point
                if apq.abs() < 1e-18 * (app.abs() + aqq.abs()) {
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                row_p.copy_from_slice(m.row(p));
                row_q.copy_from_slice(m.row(q));
                for k in 0..n {
                    let (xp, xq) = (row_p[k], row_q[k]);
                    row_p[k] = c * xp - s * xq;
                    row_q[k] = s * xp + c * xq;
                }
                row_p[p] = app - t * apq;
                row_q[q] = aqq + t * apq;
                row_p[q] = 0.0;
                row_q[p] = 0.0;
                m.row_mut(p).copy_from_slice(&row_p);
                m.row_mut(q).copy_from_slice(&row_q);
                for k in 0..n {
                    m[(k, p)] = row_p[k];
                    m[(k, q)] = row_q[k];
                }

                let (vp, vq) = vt.two_rows_mut(p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].total_cmp(&m[(j, j)]));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let eigenvectors = order
        .iter()
        .map(|&i| {
            let mut v = vt.row(i).to_vec();
            let big = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if big < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(EigenBasis { eigenvalues, eigenvectors })
}
