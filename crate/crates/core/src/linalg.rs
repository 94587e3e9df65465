//! Dense row-major matrices and the handful of factorizations the rest of the
//! crate needs: Cholesky, SPD solves, index-based sub-matrices and
//! power-iteration spectrum estimates.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative pivot threshold below which a Cholesky factorization is rejected.
const PIVOT_REL_TOL: f64 = 1e-12;
/// Symmetry tolerance accepted by [`cholesky`].
const SYMMETRY_TOL: f64 = 1e-10;
/// Default cap on power-iteration steps.
pub const DEFAULT_ITERATION_CAP: usize = 10_000;

/// Dense `rows × cols` matrix of `f64`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Matrix::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from a row-major buffer.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "buffer of length {} cannot hold a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), n_cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: n_rows,
            cols: n_cols,
            data,
        }
    }

    /// A column vector.
    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diag().iter().sum()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        out
    }

    #[inline]
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), v);
        }
    }

    /// `selfᵀ · v`.
    pub fn tr_matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            axpy(vi, self.row(i), &mut out);
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Matrix { data, ..*self }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { data, ..*self }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * c).collect();
        Matrix { data, ..*self }
    }

    /// `self + c·Id`.
    pub fn shift_diag(&self, c: f64) -> Matrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += c;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self.max_abs().max(1.0);
        (0..self.rows).all(|i| {
            (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol * scale)
        })
    }

    /// Rows `row_idx` and columns `col_idx` of `self`, in the given order.
    pub fn submatrix(&self, row_idx: &[usize], col_idx: &[usize]) -> Result<Matrix> {
        check_indices(row_idx, self.rows)?;
        check_indices(col_idx, self.cols)?;
        let mut out = Matrix::zeros(row_idx.len(), col_idx.len());
        for (oi, &i) in row_idx.iter().enumerate() {
            let src = self.row(i);
            for (oj, &j) in col_idx.iter().enumerate() {
                out[(oi, oj)] = src[j];
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

fn check_indices(idx: &[usize], bound: usize) -> Result<()> {
    for (k, &i) in idx.iter().enumerate() {
        if i >= bound {
            return Err(Error::IndexOutOfBounds { index: i, bound });
        }
        if k > 0 && idx[k - 1] >= i {
            return Err(Error::InvalidParameter(format!(
                "indices must be strictly increasing, got {} then {i}",
                idx[k - 1]
            )));
        }
    }
    Ok(())
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha · x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Lower-triangular `L` with `L·Lᵀ = a`.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::InvalidParameter("cholesky input is not symmetric".into()));
    }
    let n = a.rows;
    let max_diag = a.diag().into_iter().fold(0.0_f64, f64::max);
    let threshold = PIVOT_REL_TOL * max_diag;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let lj = &l.data[j * n..j * n + j];
        let pivot = a[(j, j)] - dot(lj, lj);
        if !(pivot > threshold) || max_diag <= 0.0 {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let s = a[(i, j)] - dot(&l.data[i * n..i * n + j], &l.data[j * n..j * n + j]);
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·x = b` in place for every column of `b`.
pub fn cholesky_solve(l: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = l.rows;
    if b.rows != n {
        return Err(Error::ShapeMismatch(format!(
            "right-hand side has {} rows, factor has {n}",
            b.rows
        )));
    }
    let mut x = b.clone();
    for c in 0..b.cols {
        // Forward: L y = b.
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
        // Backward: Lᵀ x = y.
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Vector form of [`cholesky_solve`].
pub fn cholesky_solve_vec(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    debug_assert_eq!(b.len(), n);
    let mut x = b.to_vec();
    for i in 0..n {
        let s = x[i] - dot(&l.row(i)[..i], &x[..i]);
        x[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `a·x = b` for symmetric positive-definite `a`.
pub fn solve_spd(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if b.rows != a.rows {
        return Err(Error::ShapeMismatch(format!(
            "solve_spd: a is {}x{}, b has {} rows",
            a.rows, a.cols, b.rows
        )));
    }
    let l = cholesky(a)?;
    cholesky_solve(&l, b)
}

pub fn inverse_spd(a: &Matrix) -> Result<Matrix> {
    solve_spd(a, &Matrix::identity(a.rows))
}

/// Eigenvalue estimates of a symmetric positive-definite matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumInfo {
    pub spectral_radius_estimate: f64,
    pub min_eigenvalue_estimate: f64,
    pub iterations_used: usize,
}

/// Largest and smallest eigenvalue of a symmetric positive-definite matrix,
/// each within `tol · λmax` of the truth.
pub fn spectrum(a: &Matrix, tol: f64) -> Result<SpectrumInfo> {
    spectrum_with_cap(a, tol, DEFAULT_ITERATION_CAP)
}

pub fn spectrum_with_cap(a: &Matrix, tol: f64, cap: usize) -> Result<SpectrumInfo> {
    if !a.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::InvalidParameter("spectrum needs a symmetric matrix".into()));
    }
    let (radius, it_max) = dominant_eigenvalue(a, tol, cap)?;
    // Smallest eigenvalue from the dominant one of the shifted matrix.
    let shifted = a.scale(-1.0).shift_diag(radius);
    let (gap, it_min) = dominant_eigenvalue(&shifted, tol, cap)?;
    Ok(SpectrumInfo {
        spectral_radius_estimate: radius,
        min_eigenvalue_estimate: radius - gap,
        iterations_used: it_max + it_min,
    })
}

/// Largest singular value of an arbitrary matrix.
pub fn spectral_norm(a: &Matrix, tol: f64) -> Result<f64> {
    let gram = a.transpose().matmul(a);
    let (lambda, _) = dominant_eigenvalue(&gram, tol, DEFAULT_ITERATION_CAP)?;
    Ok(lambda.max(0.0).sqrt())
}

/// Dominant (largest-magnitude) eigenvalue of a symmetric matrix.
///
/// Power iteration run on the whole matrix at once: each step squares the
/// normalized iterate, so `k` steps apply `a^(2^k)` to every basis vector.
/// The estimate is the Rayleigh quotient of the heaviest column. Returns the
/// eigenvalue and the number of squarings.
pub fn dominant_eigenvalue(a: &Matrix, tol: f64, cap: usize) -> Result<(f64, usize)> {
    let scale = a.frobenius_norm();
    if scale == 0.0 {
        return Ok((0.0, 0));
    }
    let mut power = a.scale(1.0 / scale);
    let mut prev = rayleigh_of_heaviest_column(a, &power);
    // Worst-case error roughly equals the last increment, so demand a margin.
    let stop = 0.1 * tol;
    for it in 1..=cap {
        let sq = power.matmul(&power);
        let norm = sq.frobenius_norm();
        if norm == 0.0 || !norm.is_finite() {
            return Ok((prev, it));
        }
        power = sq.scale(1.0 / norm);
        let cur = rayleigh_of_heaviest_column(a, &power);
        if (cur - prev).abs() <= stop * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok((cur, it));
        }
        prev = cur;
    }
    Err(Error::NoConvergence(cap))
}

fn rayleigh_of_heaviest_column(a: &Matrix, power: &Matrix) -> f64 {
    let n = power.cols;
    let mut best = 0;
    let mut best_norm = -1.0;
    for j in 0..n {
        let s: f64 = (0..power.rows).map(|i| power[(i, j)] * power[(i, j)]).sum();
        if s > best_norm {
            best_norm = s;
            best = j;
        }
    }
    let v = power.col(best);
    let vv = dot(&v, &v);
    if vv == 0.0 {
        return 0.0;
    }
    dot(&v, &a.matvec(&v)) / vv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn random_spd(rng: &mut RngStream, n: usize) -> Matrix {
        let mut b = Matrix::zeros(n, n);
        for v in b.as_mut_slice() {
            *v = rng.standard_normal();
        }
        b.matmul(&b.transpose()).shift_diag(0.5)
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let l = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(l, Matrix::identity(3));
    }

    #[test]
    fn cholesky_hand_example() {
        let a = Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let expected = Matrix::from_rows(&[[2.0, 0.0], [1.0, 2f64.sqrt()]]);
        assert!(l.sub(&expected).max_abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = RngStream::new(3, 0);
        for n in [1, 4, 9] {
            let a = random_spd(&mut rng, n);
            let l = cholesky(&a).unwrap();
            let err = l.matmul(&l.transpose()).sub(&a).frobenius_norm() / a.frobenius_norm();
            assert!(err < 1e-9, "n={n}: {err}");
        }
    }

    #[test]
    fn solve_spd_examples() {
        let x = solve_spd(&Matrix::identity(2), &Matrix::column(&[3.0, 4.0])).unwrap();
        assert_eq!(x.as_slice(), &[3.0, 4.0]);
        let a = Matrix::from_rows(&[[2.0, 0.0], [0.0, 4.0]]);
        let x = solve_spd(&a, &Matrix::column(&[2.0, 4.0])).unwrap();
        assert!(x.sub(&Matrix::column(&[1.0, 1.0])).max_abs() < 1e-15);
    }

    #[test]
    fn solve_spd_residual_small() {
        let mut rng = RngStream::new(11, 2);
        let a = random_spd(&mut rng, 5);
        let b = Matrix::column(&(0..5).map(|_| rng.standard_normal()).collect::<Vec<_>>());
        let x = solve_spd(&a, &b).unwrap();
        assert!(a.matmul(&x).sub(&b).max_abs() < 1e-8);
    }

    #[test]
    fn solve_spd_propagates_not_pd() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(solve_spd(&a, &Matrix::column(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn submatrix_examples() {
        let a = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [7.0, 8.0, 9.0]]);
        let c = a.submatrix(&[0, 2], &[0, 2]).unwrap();
        assert_eq!(c, Matrix::from_rows(&[[1.0, 3.0], [7.0, 9.0]]));
        assert_eq!(a.submatrix(&[0, 1, 2], &[0, 1, 2]).unwrap(), a);
        assert!(matches!(
            a.submatrix(&[0, 3], &[0]),
            Err(Error::IndexOutOfBounds { index: 3, bound: 3 })
        ));
        assert!(a.submatrix(&[1, 0], &[0]).is_err());
    }

    #[test]
    fn spectrum_diagonal_and_identity() {
        let s = spectrum(&Matrix::from_diag(&[1.0, 0.25]), 1e-10).unwrap();
        assert!((s.spectral_radius_estimate - 1.0).abs() < 1e-10);
        assert!((s.min_eigenvalue_estimate - 0.25).abs() < 1e-10);
        let s = spectrum(&Matrix::identity(5), 1e-10).unwrap();
        assert!((s.spectral_radius_estimate - 1.0).abs() < 1e-12);
        assert!((s.min_eigenvalue_estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_cap_reports_no_convergence() {
        let mut rng = RngStream::new(5, 0);
        let a = random_spd(&mut rng, 6);
        assert!(matches!(
            spectrum_with_cap(&a, 1e-14, 1),
            Err(Error::NoConvergence(1))
        ));
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Matrix::from_diag(&[-3.0, 2.0, 0.5]);
        assert!((spectral_norm(&a, 1e-12).unwrap() - 3.0).abs() < 1e-10);
    }
}
