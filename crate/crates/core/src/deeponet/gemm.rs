//! Thin safe wrapper over `matrixmultiply::dgemm`.

/// Strided matrix view: element `(i, j)` lives at `data[i * rs + j * cs]`.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn row_major(data: &'a [f64], cols: usize) -> Self {
        View { data, rs: cols, cs: 1 }
    }

    /// Transpose of a row-major `rows × cols` matrix.
    pub fn transposed(data: &'a [f64], cols: usize) -> Self {
        View { data, rs: 1, cs: cols }
    }
}

fn extent(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// `C ← α A B + β C` with `A: m×k`, `B: k×n`, `C: m×n` (row-major, leading dim `ldc`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: View, b: View, beta: f64, c: &mut [f64], rsc: usize, csc: usize) {
    assert!(a.data.len() >= extent(m, k, a.rs, a.cs), "gemm: A too short");
    assert!(b.data.len() >= extent(k, n, b.rs, b.cs), "gemm: B too short");
    assert!(c.len() >= extent(m, n, rsc, csc), "gemm: C too short");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the asserts above guarantee every addressed element is in bounds,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        let mut c = [0.0; 4];
        gemm(2, 3, 2, 1.0, View::row_major(&a, 3), View::row_major(&b, 2), 0.0, &mut c, 2, 1);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // Aᵀ (3x2) times the 2x3 A
        let mut d = [0.0; 9];
        gemm(3, 2, 3, 1.0, View::transposed(&a, 3), View::row_major(&a, 3), 0.0, &mut d, 3, 1);
        assert_eq!(d[0], 17.0);
        assert_eq!(d[4], 29.0);
    }
}
