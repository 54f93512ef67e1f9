use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        DenseMatrix { n_rows, n_cols, data: rows.concat() }
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { n_rows, n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    /// Disjoint mutable rows `p < q`.
    pub(crate) fn two_rows_mut(&mut self, p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert!(p < q);
        let n = self.n_cols;
        let (a, b) = self.data.split_at_mut(q * n);
        (&mut a[p * n..(p + 1) * n], &mut b[..n])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows).map(|i| super::dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(src) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n_rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Solve `A x = b` by LU factorization with partial pivoting.
///
/// Zero multipliers are skipped and row updates are clipped to the nonzero
/// extent of the pivot row, so banded FE matrices factor in O(n·b²).
pub fn dense_solve(a: &DenseMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch { what: "dense_solve: square matrix", expected: n, got: a.n_cols() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { what: "dense_solve: right-hand side", expected: n, got: b.len() });
    }
    let threshold = 1e-14 * a.inf_norm();
    let mut lu = a.clone();
    let mut x = b.to_vec();
    // one past the last nonzero column of each row
    let mut row_end: Vec<usize> = (0..n)
        .map(|i| lu.row(i).iter().rposition(|&v| v != 0.0).map_or(0, |p| p + 1))
        .collect();

    for k in 0..n {
        let mut piv = k;
        let mut best = lu[(k, k)].abs();
        for i in k + 1..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                piv = i;
            }
        }
        if !(best > threshold) {
            return Err(Error::Singular { column: k, pivot: best });
        }
        if piv != k {
            let (lo, hi) = lu.data.split_at_mut(piv * n);
            lo[k * n..(k + 1) * n].swap_with_slice(&mut hi[..n]);
            x.swap(k, piv);
            row_end.swap(k, piv);
        }
        let pivot = lu[(k, k)];
        let end = row_end[k];
        let (head, tail) = lu.data.split_at_mut((k + 1) * n);
        let prow = &head[k * n..(k + 1) * n];
        for i in k + 1..n {
            let row = &mut tail[(i - k - 1) * n..(i - k) * n];
            let aik = row[k];
            if aik == 0.0 {
                continue;
            }
            let l = aik / pivot;
            row[k] = 0.0;
            for j in k + 1..end {
                row[j] -= l * prow[j];
            }
            x[i] -= l * x[k];
            row_end[i] = row_end[i].max(end);
        }
    }
    for k in (0..n).rev() {
        let row = lu.row(k);
        let mut s = x[k];
        for j in k + 1..row_end[k] {
            s -= row[j] * x[j];
        }
        x[k] = s / row[k];
    }
    Ok(x)
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
pub fn cholesky(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::DimensionMismatch { what: "cholesky: square matrix", expected: n, got: a.n_cols() });
    }
    let mut l = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = super::dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let d = a[(i, i)] - s;
                if !(d > 0.0) {
                    return Err(Error::NotPositiveDefinite(i));
                }
                l[(i, i)] = d.sqrt();
            } else {
                l[(i, j)] = (a[(i, j)] - s) / l[(j, j)];
            }
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::linalg::norm2;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        let m = DenseMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let mut a = m.matmul(&m.transpose());
        for i in 0..n {
            a[(i, i)] += n as f64;
        }
        a
    }

    #[test]
    fn identity_solve() {
        let b = vec![1.0, -2.0, 3.5];
        assert_eq!(dense_solve(&DenseMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn hilbert_four() {
        let h = DenseMatrix::from_fn(4, 4, |i, j| 1.0 / (i + j + 1) as f64);
        let b: Vec<f64> = (0..4).map(|i| h.row(i).iter().sum()).collect();
        let x = dense_solve(&h, &b).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_spd(50, &mut rng);
        let b: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = dense_solve(&a, &b).unwrap();
        let r: Vec<f64> = a.matvec(&x).iter().zip(&b).map(|(ax, bi)| ax - bi).collect();
        assert!(norm2(&r) <= 1e-10 * norm2(&b));
    }

    #[test]
    fn pivoting_needed() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert_eq!(dense_solve(&a, &[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(matches!(dense_solve(&a, &[1.0, 1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn cholesky_reproduces() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_spd(20, &mut rng);
        let l = cholesky(&a).unwrap();
        let back = l.matmul(&l.transpose());
        for i in 0..20 {
            for j in 0..20 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-10);
            }
        }
        let not_pd = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(cholesky(&not_pd).is_err());
    }
}
