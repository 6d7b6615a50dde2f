//! Small dense matrix helpers.
//!
//! Everything in this crate is tiny (wrench space is 3, joint space is ~8,
//! network layers are a few dozen wide), so a flat row-major `Mat` with
//! hand-written kernels is simpler and faster than pulling in a full linear
//! algebra stack. The multiply kernels are written so the inner loops run
//! over contiguous slices and autovectorize.

/// Outputs at least this large go through the packed dgemm kernels; smaller
/// products use the plain loops (lower overhead, and they keep the tiny
/// kinematics solves dependency-trivial to reason about).
const GEMM_CUTOVER: usize = 512;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len());
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len());
        let mut y = vec![0.0; self.rows];
        for r in 0..self.rows {
            y[r] = dot(self.row(r), x);
        }
        y
    }

    /// y = Aᵀ x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len());
        let mut y = vec![0.0; self.cols];
        for r in 0..self.rows {
            axpy(x[r], self.row(r), &mut y);
        }
        y
    }

    /// C = A B
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        if out.data.len() >= GEMM_CUTOVER {
            unsafe {
                matrixmultiply::dgemm(
                    self.rows,
                    self.cols,
                    other.cols,
                    1.0,
                    self.data.as_ptr(),
                    self.cols as isize,
                    1,
                    other.data.as_ptr(),
                    other.cols as isize,
                    1,
                    0.0,
                    out.data.as_mut_ptr(),
                    other.cols as isize,
                    1,
                );
            }
            return out;
        }
        for r in 0..self.rows {
            let a_row = self.row(r);
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        out
    }

    /// C = A Bᵀ — B is addressed transposed via strides.
    pub fn matmul_bt(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut out = Mat::zeros(self.rows, other.rows);
        if out.data.len() >= GEMM_CUTOVER {
            unsafe {
                matrixmultiply::dgemm(
                    self.rows,
                    self.cols,
                    other.rows,
                    1.0,
                    self.data.as_ptr(),
                    self.cols as isize,
                    1,
                    other.data.as_ptr(),
                    1,
                    other.cols as isize,
                    0.0,
                    out.data.as_mut_ptr(),
                    other.rows as isize,
                    1,
                );
            }
            return out;
        }
        for r in 0..self.rows {
            let a_row = self.row(r);
            for c in 0..other.rows {
                out.data[r * other.rows + c] = dot(a_row, other.row(c));
            }
        }
        out
    }

    /// C = Aᵀ B — A is addressed transposed via strides.
    pub fn matmul_at(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let mut out = Mat::zeros(self.cols, other.cols);
        if out.data.len() >= GEMM_CUTOVER {
            unsafe {
                matrixmultiply::dgemm(
                    self.cols,
                    self.rows,
                    other.cols,
                    1.0,
                    self.data.as_ptr(),
                    1,
                    self.cols as isize,
                    other.data.as_ptr(),
                    other.cols as isize,
                    1,
                    0.0,
                    out.data.as_mut_ptr(),
                    other.cols as isize,
                    1,
                );
            }
            return out;
        }
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (c, &a) in a_row.iter().enumerate() {
                if a != 0.0 {
                    axpy(a, b_row, &mut out.data[c * other.cols..(c + 1) * other.cols]);
                }
            }
        }
        out
    }

    /// Frobenius-max of |entries|, used for finite checks and caps.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// y += a * x
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solve A x = b for symmetric positive definite A via Cholesky.
/// `ridge` is added to the diagonal before factoring.
/// Returns None if the (regularized) matrix is not positive definite.
pub fn solve_spd(a: &Mat, b: &[f64], ridge: f64) -> Option<Vec<f64>> {
    assert_eq!(a.rows, a.cols);
    assert_eq!(a.rows, b.len());
    let n = a.rows;
    let mut l = a.clone();
    for i in 0..n {
        l.data[i * n + i] += ridge;
    }
    // In-place lower Cholesky.
    for j in 0..n {
        for k in 0..j {
            let ljk = l.data[j * n + k];
            for i in j..n {
                l.data[i * n + j] -= l.data[i * n + k] * ljk;
            }
        }
        let d = l.data[j * n + j];
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let s = d.sqrt();
        for i in j..n {
            l.data[i * n + j] /= s;
        }
    }
    // Forward then back substitution.
    let mut x = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= l.data[i * n + k] * x[k];
        }
        x[i] /= l.data[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= l.data[k * n + i] * x[k];
        }
        x[i] /= l.data[i * n + i];
    }
    Some(x)
}

/// Solve A x = b for general square A via LU with partial pivoting.
pub fn solve_lu(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.rows, a.cols);
    assert_eq!(a.rows, b.len());
    let n = a.rows;
    let mut lu = a.clone();
    let mut x = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for col in 0..n {
        let mut pivot = col;
        let mut best = lu.data[perm[col] * n + col].abs();
        for r in col + 1..n {
            let v = lu.data[perm[r] * n + col].abs();
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        perm.swap(col, pivot);
        let p = perm[col];
        let diag = lu.data[p * n + col];
        for r in col + 1..n {
            let q = perm[r];
            let f = lu.data[q * n + col] / diag;
            lu.data[q * n + col] = f;
            for c in col + 1..n {
                lu.data[q * n + c] -= f * lu.data[p * n + c];
            }
        }
    }
    // Apply permutation, then forward/back substitution.
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = x[perm[i]];
        for k in 0..i {
            y[i] -= lu.data[perm[i] * n + k] * y[k];
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= lu.data[perm[i] * n + k] * y[k];
        }
        y[i] /= lu.data[perm[i] * n + i];
    }
    x.copy_from_slice(&y);
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_matches_manual() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = Mat::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.data, vec![19.0, 22.0, 43.0, 50.0]);
        let cbt = a.matmul_bt(&b.transpose());
        assert_eq!(cbt.data, c.data);
        let cat = a.transpose().matmul_at(&b);
        // (Aᵀ)ᵀ B = A B
        assert_eq!(cat.data, c.data);
    }

    #[test]
    fn spd_solve_roundtrip() {
        let a = Mat::from_rows(&[
            vec![4.0, 1.0, 0.5],
            vec![1.0, 3.0, 0.2],
            vec![0.5, 0.2, 5.0],
        ]);
        let x_true = vec![1.0, -2.0, 0.25];
        let b = a.matvec(&x_true);
        let x = solve_spd(&a, &b, 0.0).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }

    #[test]
    fn spd_rejects_indefinite() {
        let a = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(solve_spd(&a, &[1.0, 1.0], 0.0).is_none());
    }

    #[test]
    fn lu_solve_roundtrip() {
        let a = Mat::from_rows(&[
            vec![0.0, 2.0, 1.0],
            vec![1.0, -1.0, 0.0],
            vec![3.0, 0.0, -2.0],
        ]);
        let x_true = vec![-1.5, 2.0, 0.7];
        let b = a.matvec(&x_true);
        let x = solve_lu(&a, &b).unwrap();
        for (xi, ti) in x.iter().zip(&x_true) {
            assert!((xi - ti).abs() < 1e-12);
        }
    }
}
