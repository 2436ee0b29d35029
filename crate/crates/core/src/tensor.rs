//! Dense row-major `f64` matrices and the handful of kernels attention needs.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedRng;

/// Default relative tolerance for [`numerical_rank`].
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

const MAX_JACOBI_SWEEPS: usize = 80;

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(8) {
                write!(f, "{:>10.4} ", self[(r, c)])?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; intended for literals.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(dim_error(op, self, other));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        Ok(self.zip_map(other, |a, b| a - b))
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "axpy")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy of rows `[start, start + count)`.
    pub fn slice_rows(&self, start: usize, count: usize) -> Matrix {
        Matrix {
            rows: count,
            cols: self.cols,
            data: self.data[start * self.cols..(start + count) * self.cols].to_vec(),
        }
    }

    /// Copy of columns `[start, start + count)`.
    pub fn slice_cols(&self, start: usize, count: usize) -> Matrix {
        Matrix::from_fn(self.rows, count, |r, c| self[(r, start + c)])
    }

    /// Horizontal concatenation.
    pub fn hcat(parts: &[Matrix]) -> Result<Matrix> {
        let rows = parts.first().map_or(0, Matrix::rows);
        if let Some(bad) = parts.iter().find(|p| p.rows != rows) {
            return Err(Error::Shape(format!(
                "hcat needs equal row counts, got {rows} and {}",
                bad.rows
            )));
        }
        let cols = parts.iter().map(Matrix::cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                out.row_mut(r)[offset..offset + p.cols].copy_from_slice(p.row(r));
                offset += p.cols;
            }
        }
        Ok(out)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

fn dim_error(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Dimension {
        op,
        left_rows: a.rows,
        left_cols: a.cols,
        right_rows: b.rows,
        right_cols: b.cols,
    }
}

/// `a × b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(dim_error("matmul", a, b));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    let n = b.cols;
    for i in 0..a.rows {
        let out_row = &mut out.data[i * n..(i + 1) * n];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let b_row = &b.data[k * n..(k + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a × bᵀ` without materializing the transpose.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(dim_error("matmul_nt", a, b));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ai = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = dot(ai, b.row(j));
        }
    }
    Ok(out)
}

/// `aᵀ × b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(dim_error("matmul_tn", a, b));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    let n = b.cols;
    for k in 0..a.rows {
        let b_row = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * n..(i + 1) * n];
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-wise softmax of `a / scale`, stabilized by subtracting each row's max.
pub fn softmax_rows(a: &Matrix, scale: f64) -> Result<Matrix> {
    if !(scale > 0.0) {
        return Err(Error::Value(format!(
            "softmax scale must be positive, got {scale}"
        )));
    }
    let mut out = a.clone();
    for r in 0..out.rows {
        softmax_in_place(out.row_mut(r), scale);
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64], scale: f64) {
    let inv = 1.0 / scale;
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = ((*v - max) * inv).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Thin singular value decomposition `m = U diag(s) Vᵀ`, singular values descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let k = self.s.len();
        let us = Matrix::from_fn(self.u.rows(), k, |r, c| self.u[(r, c)] * self.s[c]);
        matmul(&us, &self.vt).expect("svd factors are conformable")
    }
}

/// One-sided Jacobi SVD.
pub fn svd(m: &Matrix) -> Result<Svd> {
    if m.rows < m.cols {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    let (rows, cols) = m.shape();
    // Work column-major: a[j] is column j.
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| m[(i, j)]).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..cols).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let eps = f64::EPSILON;
    // Columns at rounding-noise level never settle; leave them alone.
    let noise = (eps * m.frobenius_norm()).powi(2);
    let mut converged = cols < 2;
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if gamma == 0.0
                    || gamma.abs() <= eps * (alpha * beta).sqrt()
                    || alpha.min(beta) <= noise
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::SvdNonConvergence {
            sweeps: MAX_JACOBI_SWEEPS,
        });
    }

    let mut order: Vec<(usize, f64)> = a
        .iter()
        .map(|col| dot(col, col).sqrt())
        .enumerate()
        .collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));

    let mut u = Matrix::zeros(rows, cols);
    let mut vt = Matrix::zeros(cols, cols);
    let mut s = Vec::with_capacity(cols);
    for (k, &(j, sigma)) in order.iter().enumerate() {
        s.push(sigma);
        if sigma > 0.0 {
            for i in 0..rows {
                u[(i, k)] = a[j][i] / sigma;
            }
        }
        for i in 0..cols {
            vt[(k, i)] = v[j][i];
        }
    }
    Ok(Svd { u, s, vt })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let xq = *y;
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.s)
}

/// Number of singular values strictly greater than `rel_tol · σ_max`.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Value(format!(
            "rel_tol must lie in (0, 1), got {rel_tol}"
        )));
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(0);
    }
    let s = singular_values(m)?;
    let smax = s[0];
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * smax).count())
}

/// Frobenius error of the best rank-`k` approximation (Eckart–Young).
pub fn truncation_error(m: &Matrix, k: usize) -> Result<f64> {
    let s = singular_values(m)?;
    Ok(s.iter().skip(k).map(|x| x * x).sum::<f64>().sqrt())
}

/// Deterministic `rows × cols` matrix with entries drawn from `N(0, std²)`.
pub fn randn_matrix(rows: usize, cols: usize, std: f64, seed: u64) -> Result<Matrix> {
    let mut rng = SeedRng::new(seed);
    randn_with(rows, cols, std, &mut rng)
}

pub fn randn_with(rows: usize, cols: usize, std: f64, rng: &mut SeedRng) -> Result<Matrix> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::Value(format!(
            "std must be finite and non-negative, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(Matrix::zeros(rows, cols));
    }
    Ok(Matrix::from_fn(rows, cols, |_, _| std * rng.normal()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a[(i, k)] * b[(k, j)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    /// Rank by Gaussian elimination with partial pivoting.
    fn gauss_rank(m: &Matrix, tol: f64) -> usize {
        let mut a = m.clone();
        let (rows, cols) = a.shape();
        let scale = a.max_abs().max(1e-300);
        let mut rank = 0;
        for c in 0..cols {
            if rank == rows {
                break;
            }
            let (piv, val) = (rank..rows)
                .map(|r| (r, a[(r, c)].abs()))
                .max_by(|x, y| x.1.total_cmp(&y.1))
                .unwrap();
            if val <= tol * scale {
                continue;
            }
            for k in 0..cols {
                let tmp = a[(rank, k)];
                a[(rank, k)] = a[(piv, k)];
                a[(piv, k)] = tmp;
            }
            for r in rank + 1..rows {
                let f = a[(r, c)] / a[(rank, c)];
                for k in c..cols {
                    a[(r, k)] -= f * a[(rank, k)];
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn identity_times_m() {
        let m = randn_matrix(3, 4, 1.0, 1).unwrap();
        assert_eq!(matmul(&Matrix::identity(3), &m).unwrap(), m);
    }

    #[test]
    fn hand_product() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]);
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let a = randn_matrix(8, 8, 1.0, 2).unwrap();
        let b = randn_matrix(8, 8, 1.0, 3).unwrap();
        let fast = matmul(&a, &b).unwrap();
        let slow = naive_matmul(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let nt = matmul_nt(&a, &b.transpose()).unwrap();
        let tn = matmul_tn(&a.transpose(), &b).unwrap();
        for ((x, y), z) in nt.data().iter().zip(tn.data()).zip(slow.data()) {
            assert!((x - z).abs() <= 1e-12 && (y - z).abs() <= 1e-12);
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let err = matmul(&Matrix::zeros(2, 3), &Matrix::zeros(2, 3)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let s = softmax_rows(&Matrix::zeros(2, 3), 1.0).unwrap();
        assert!(s.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let s = softmax_rows(&Matrix::from_rows(&[vec![0.0, 2f64.ln()]]), 1.0).unwrap();
        assert!((s[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s[(0, 1)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_nonpositive_scale() {
        assert!(softmax_rows(&Matrix::zeros(1, 1), 0.0).is_err());
    }

    #[test]
    fn softmax_extreme_logits_stay_finite() {
        let m = Matrix::from_rows(&[vec![1e300, -1e300, 0.0]]);
        let s = softmax_rows(&m, 1.0).unwrap();
        assert!(s.is_finite());
        assert_eq!(s[(0, 0)], 1.0);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(numerical_rank(&Matrix::identity(4), 1e-8).unwrap(), 4);
        let u = randn_matrix(6, 1, 1.0, 4).unwrap();
        let v = randn_matrix(1, 5, 1.0, 5).unwrap();
        assert_eq!(numerical_rank(&matmul(&u, &v).unwrap(), 1e-8).unwrap(), 1);
        assert_eq!(numerical_rank(&Matrix::zeros(3, 3), 1e-8).unwrap(), 0);
    }

    #[test]
    fn rank_of_thin_product_matches_elimination() {
        let a = randn_matrix(16, 3, 1.0, 6).unwrap();
        let b = randn_matrix(3, 16, 1.0, 7).unwrap();
        let p = matmul(&a, &b).unwrap();
        assert_eq!(gauss_rank(&p, 1e-9), 3);
        assert_eq!(numerical_rank(&p, 1e-8).unwrap(), 3);
    }

    #[test]
    fn rank_rejects_bad_tolerance() {
        assert!(numerical_rank(&Matrix::identity(2), 0.0).is_err());
        assert!(numerical_rank(&Matrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn svd_of_wide_matrix() {
        let m = randn_matrix(3, 7, 1.0, 8).unwrap();
        let svd = svd(&m).unwrap();
        let err = svd.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn truncation_error_of_exact_low_rank_is_zero() {
        let a = randn_matrix(10, 2, 1.0, 9).unwrap();
        let p = matmul_nt(&a, &a).unwrap();
        assert!(truncation_error(&p, 2).unwrap() < 1e-10);
        assert!(truncation_error(&p, 1).unwrap() > 1e-3);
    }

    #[test]
    fn randn_examples() {
        assert_eq!(randn_matrix(3, 3, 0.0, 1).unwrap(), Matrix::zeros(3, 3));
        let a = randn_matrix(4, 5, 1.0, 42).unwrap();
        let b = randn_matrix(4, 5, 1.0, 42).unwrap();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let s = randn_matrix(100, 100, 0.02, 11).unwrap();
        let n = s.data().len() as f64;
        let mean = s.data().iter().sum::<f64>() / n;
        let var = s.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var.sqrt() - 0.02).abs() < 0.05 * 0.02);
        assert!(randn_matrix(1, 1, -1.0, 0).is_err());
    }

    fn arb_matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
        proptest::collection::vec(-3.0f64..3.0, rows * cols)
            .prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn softmax_rows_are_distributions(m in arb_matrix(5, 5), scale in 0.1f64..10.0) {
            let s = softmax_rows(&m, scale).unwrap();
            for r in 0..5 {
                let sum: f64 = s.row(r).iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                prop_assert!(s.row(r).iter().all(|&v| v > 0.0 && v <= 1.0));
            }
        }

        #[test]
        fn matmul_is_associative(seed in any::<u64>()) {
            let a = randn_matrix(16, 16, 1.0, seed).unwrap();
            let b = randn_matrix(16, 16, 1.0, seed.wrapping_add(1)).unwrap();
            let c = randn_matrix(16, 16, 1.0, seed.wrapping_add(2)).unwrap();
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            let rel = left.sub(&right).unwrap().frobenius_norm() / left.frobenius_norm();
            prop_assert!(rel <= 1e-9);
        }

        #[test]
        fn svd_reconstructs(seed in any::<u64>()) {
            let m = randn_matrix(32, 32, 1.0, seed).unwrap();
            let svd = svd(&m).unwrap();
            let rel = svd.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm();
            prop_assert!(rel <= 1e-10);
        }

        #[test]
        fn rank_of_product_is_submultiplicative(seed in any::<u64>(), k in 1usize..6) {
            let a = matmul(&randn_matrix(12, k, 1.0, seed).unwrap(), &randn_matrix(k, 12, 1.0, seed ^ 1).unwrap()).unwrap();
            let b = randn_matrix(12, 12, 1.0, seed ^ 2).unwrap();
            let ab = matmul(&a, &b).unwrap();
            let ra = numerical_rank(&a, DEFAULT_RANK_TOL).unwrap();
            let rb = numerical_rank(&b, DEFAULT_RANK_TOL).unwrap();
            prop_assert!(numerical_rank(&ab, DEFAULT_RANK_TOL).unwrap() <= ra.min(rb));
        }
    }
}
