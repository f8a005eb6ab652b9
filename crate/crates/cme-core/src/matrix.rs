//! Minimal dense row-major matrix used throughout the crate.
//!
//! The workloads here are small (hundreds of rows, at most a few hundred
//! columns), so the implementation favors clarity and deterministic
//! accumulation order over blocking or parallelism. Shape violations are
//! programmer errors and panic; numerically unsolvable systems return
//! [`Error::Numerical`].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use crate::math::FloatExt;
use crate::{Error, Result};

/// Dense `rows x cols` matrix of `f64` in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Wraps a row-major buffer; `data.len()` must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer length {} does not match {rows}x{cols}",
            data.len()
        );
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Stacks equal-length row slices into a matrix.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty(), "from_rows needs at least one row");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows in from_rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    /// A single-row matrix viewing of a slice (copied).
    pub fn row_vector(values: &[f64]) -> Self {
        Self::from_vec(1, values.len(), values.to_vec())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// `self * other`, with the k-loop outermost per row for cache-friendly
    /// row-major access.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.rows,
            "matmul inner dimensions {}x{} vs {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b_kj) in out_row.iter_mut().zip(b_row) {
                    *o += a_ik * b_kj;
                }
            }
        }
        out
    }

    /// `self * otherᵀ`; both operands are traversed along rows.
    pub fn matmul_transpose_b(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.cols,
            "matmul_transpose_b width mismatch: {} vs {}",
            self.cols, other.cols
        );
        Mat::from_fn(self.rows, other.rows, |i, j| {
            dot(self.row(i), other.row(j))
        })
    }

    /// `selfᵀ * other`.
    pub fn matmul_transpose_a(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.rows, other.rows,
            "matmul_transpose_a height mismatch: {} vs {}",
            self.rows, other.rows
        );
        let mut out = Mat::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a_ri) in a_row.iter().enumerate() {
                if a_ri == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &b_rj) in out_row.iter_mut().zip(b_row) {
                    *o += a_ri * b_rj;
                }
            }
        }
        out
    }

    /// Matrix-vector product `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec width mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `selfᵀ * v`.
    pub fn matvec_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "matvec_transpose height mismatch");
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += vr * a;
            }
        }
        out
    }

    /// `self += scale * other`, elementwise.
    pub fn add_assign_scaled(&mut self, other: &Mat, scale: f64) {
        assert_eq!(self.rows, other.rows, "add_assign_scaled shape mismatch");
        assert_eq!(self.cols, other.cols, "add_assign_scaled shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scale_in_place(&mut self, scale: f64) {
        for a in &mut self.data {
            *a *= scale;
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, &v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.data.iter_mut()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len(), "dot length mismatch");
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails with [`Error::Numerical`] when a pivot is not strictly positive,
/// which signals the matrix is not positive definite (often a too-small ridge
/// parameter upstream).
pub fn cholesky(a: &Mat) -> Result<Mat> {
    assert_eq!(a.rows(), a.cols(), "cholesky needs a square matrix");
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Numerical(format!(
                        "cholesky pivot {sum:e} at index {i}; matrix is not positive definite \
                         (consider a larger ridge parameter)"
                    )));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the lower Cholesky factor `L`.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    assert_eq!(b.len(), n, "cholesky_solve length mismatch");
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l.get(i, k) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= l.get(k, i) * y[k];
        }
        y[i] /= l.get(i, i);
    }
    y
}

/// Solves `L Lᵀ X = B` column by column.
pub fn cholesky_solve_mat(l: &Mat, b: &Mat) -> Mat {
    assert_eq!(l.rows(), b.rows(), "cholesky_solve_mat height mismatch");
    let mut out = Mat::zeros(b.rows(), b.cols());
    let mut col = vec![0.0; b.rows()];
    for j in 0..b.cols() {
        for i in 0..b.rows() {
            col[i] = b.get(i, j);
        }
        let solved = cholesky_solve(l, &col);
        for i in 0..b.rows() {
            out.set(i, j, solved[i]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn matmul_matches_hand_example() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transposed_products_agree_with_explicit_transpose() {
        let a = Mat::from_fn(4, 3, |i, j| (i * 3 + j) as f64 * 0.37 - 1.0);
        let b = Mat::from_fn(4, 5, |i, j| (i as f64 - j as f64) * 0.21);
        let c = Mat::from_fn(5, 3, |i, j| (i + 2 * j) as f64 * 0.11 + 0.5);

        let atb = a.matmul_transpose_a(&b);
        let expected = a.transpose().matmul(&b);
        for (x, y) in atb.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }

        let bc = b.matmul_transpose_b(&c.transpose());
        let expected = b.matmul(&c);
        for (x, y) in bc.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn matvec_agrees_with_matmul() {
        let a = Mat::from_fn(3, 4, |i, j| (i + j) as f64);
        let v = [1.0, -2.0, 0.5, 3.0];
        let direct = a.matvec(&v);
        let via_mat = a.matmul(&Mat::from_vec(4, 1, v.to_vec()));
        assert_eq!(direct, via_mat.data());

        let u = [2.0, -1.0, 4.0];
        let vt = a.matvec_transpose(&u);
        let via_mat = a.transpose().matvec(&u);
        for (x, y) in vt.iter().zip(&via_mat) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_solves_spd_system() {
        // A = M Mᵀ + I is symmetric positive definite by construction.
        let m = Mat::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
        let mut a = m.matmul_transpose_b(&m);
        for i in 0..5 {
            a.set(i, i, a.get(i, i) + 1.0);
        }
        let l = cholesky(&a).expect("SPD matrix must factor");
        let b = [1.0, -1.0, 2.0, 0.0, 0.5];
        let x = cholesky_solve(&l, &b);
        let back = a.matvec(&x);
        for (lhs, rhs) in back.iter().zip(&b) {
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        let err = cholesky(&a).unwrap_err();
        assert!(matches!(err, crate::Error::Numerical(_)));
    }

    #[test]
    fn cholesky_solve_mat_matches_columnwise_solves() {
        let m = Mat::from_fn(4, 4, |i, j| ((i * 5 + j * 2) % 7) as f64 / 7.0);
        let mut a = m.matmul_transpose_b(&m);
        for i in 0..4 {
            a.set(i, i, a.get(i, i) + 2.0);
        }
        let l = cholesky(&a).unwrap();
        let b = Mat::from_fn(4, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0));
        let x = cholesky_solve_mat(&l, &b);
        for j in 0..3 {
            let col: Vec<f64> = (0..4).map(|i| b.get(i, j)).collect();
            let expect = cholesky_solve(&l, &col);
            for i in 0..4 {
                assert_abs_diff_eq!(x.get(i, j), expect[i], epsilon = 1e-12);
            }
        }
    }
}
