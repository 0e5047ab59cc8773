//! Dense vector and matrix kernels.
//!
//! Sizes in this crate are desk-scale (a few thousand rows at most), so
//! everything is stored densely in row-major order and the factorizations are
//! written out directly rather than pulled from a BLAS backend.

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal factor entries below this fraction of the largest one mark the
/// unregularized least-squares system as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Relative symmetry tolerance accepted by [`spectral_bounds`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// A dense real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DenseVector(Vec<f64>);

impl DenseVector {
    /// Builds a vector, rejecting empty input and non-finite entries.
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("vector must have at least one entry".into()));
        }
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(entries))
    }

    /// Wraps entries without validation. Used for intermediate results whose
    /// finiteness is checked by the caller (e.g. divergence detection).
    pub(crate) fn from_vec(entries: Vec<f64>) -> Self {
        Self(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Self {
        Self(vec![value; dim])
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self((0..dim).map(f).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn scaled(&self, alpha: f64) -> DenseVector {
        Self(self.0.iter().map(|v| alpha * v).collect())
    }

    pub fn add(&self, other: &DenseVector) -> DenseVector {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        self.zip_map(other, |a, b| a - b)
    }

    /// Returns `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &DenseVector) -> DenseVector {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    /// In-place `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &DenseVector) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseVector {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &DenseVector, f: impl Fn(f64, f64) -> f64) -> DenseVector {
        debug_assert_eq!(self.dim(), other.dim());
        Self(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn distance(&self, other: &DenseVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl Deref for DenseVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for DenseVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// A dense row-major real matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                expected: cols,
                found: bad.len(),
            });
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds an `n x columns.len()` matrix whose j-th column is `columns[j]`.
    pub fn from_columns(columns: &[DenseVector]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, |c| c.dim());
        if let Some(bad) = columns.iter().find(|c| c.dim() != rows) {
            return Err(Error::DimensionMismatch {
                expected: rows,
                found: bad.dim(),
            });
        }
        let mut data = vec![0.0; rows * cols];
        for (j, c) in columns.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                data[i * cols + j] = *v;
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = *d;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> DenseVector {
        DenseVector::from_fn(self.rows, |i| self.get(i, j))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// `A x`.
    pub fn matvec(&self, x: &[f64]) -> DenseVector {
        debug_assert_eq!(x.len(), self.cols);
        DenseVector::from_fn(self.rows, |i| dot(self.row(i), x))
    }

    /// `Aᵀ y`.
    pub fn tr_matvec(&self, y: &[f64]) -> DenseVector {
        debug_assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, yi) in y.iter().enumerate() {
            if *yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += yi * a;
            }
        }
        DenseVector::from_vec(out)
    }

    /// `A B`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut data = vec![0.0; self.rows * other.cols];
        for i in 0..self.rows {
            let out = &mut data[i * other.cols..(i + 1) * other.cols];
            for (k, a) in self.row(i).iter().enumerate() {
                for (o, b) in out.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(Self {
            rows: self.rows,
            cols: other.cols,
            data,
        })
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<f64>) -> Self {
        let (rows, cols) = m.shape();
        let data = (0..rows)
            .flat_map(|i| (0..cols).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Self { rows, cols, data }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `min_w ½‖rhs − U w‖² + (λ/2)‖w‖²`, i.e. `w = (UᵀU + λI)⁻¹ Uᵀ rhs`.
///
/// The normal equations are never formed: the stacked system `[U; √λ I]` is
/// reduced by Householder reflections and the triangular factor is
/// back-substituted. With `lambda = 0` a diagonal factor entry below
/// [`RANK_TOLERANCE`] times the largest one is reported as
/// [`Error::SingularSystem`].
pub fn solve_regularized_ls(u: &DenseMatrix, rhs: &DenseVector, lambda: f64) -> Result<DenseVector> {
    let (n, p) = (u.rows(), u.cols());
    if rhs.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: rhs.dim(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "regularization must be a finite nonnegative number, got {lambda}"
        )));
    }

    // Column-major working copy of the stacked system.
    let regularized = lambda > 0.0;
    let total = if regularized { n + p } else { n };
    let sqrt_lambda = lambda.sqrt();
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut c = Vec::with_capacity(total);
            c.extend((0..n).map(|i| u.get(i, j)));
            if regularized {
                c.extend((0..p).map(|i| if i == j { sqrt_lambda } else { 0.0 }));
            }
            c
        })
        .collect();
    let mut b: Vec<f64> = rhs.iter().copied().collect();
    b.resize(total, 0.0);

    let mut diag = vec![0.0; p];
    for j in 0..p {
        if j >= total {
            break;
        }
        let alpha = norm(&cols[j][j..]);
        if alpha == 0.0 {
            diag[j] = 0.0;
            continue;
        }
        let sign = if cols[j][j] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = cols[j][j..].to_vec();
        v[0] += sign * alpha;
        let vnorm2 = dot(&v, &v);
        for col in cols.iter_mut().skip(j) {
            reflect(&v, vnorm2, &mut col[j..]);
        }
        reflect(&v, vnorm2, &mut b[j..]);
        diag[j] = cols[j][j];
    }

    let largest = diag.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
    let threshold = RANK_TOLERANCE * largest;
    if let Some(pivot) = diag.iter().find(|d| d.abs() <= threshold || **d == 0.0) {
        return Err(Error::SingularSystem {
            pivot: pivot.abs(),
            threshold,
        });
    }

    let mut w = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= cols[k][i] * w[k];
        }
        w[i] = s / cols[i][i];
    }
    if let Some(index) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(DenseVector(w))
}

fn reflect(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let s = 2.0 * dot(v, x) / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn spectral_bounds(a: &DenseMatrix) -> Result<(f64, f64)> {
    let eig = symmetric_eigenvalues(a)?;
    let mu = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let l = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((mu, l))
}

/// All eigenvalues of a symmetric matrix, in no particular order.
pub fn symmetric_eigenvalues(a: &DenseMatrix) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let eig = SymmetricEigen::new(a.to_nalgebra());
    Ok(eig.eigenvalues.iter().copied().collect())
}

fn check_symmetric(a: &DenseMatrix) -> Result<()> {
    if a.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let tolerance = SYMMETRY_TOLERANCE * a.max_abs();
    let mut deviation: f64 = 0.0;
    for i in 0..a.rows() {
        for j in i + 1..a.cols() {
            deviation = deviation.max((a.get(i, j) - a.get(j, i)).abs());
        }
    }
    if deviation > tolerance {
        return Err(Error::NotSymmetric { deviation, tolerance });
    }
    Ok(())
}

/// Largest singular value `‖A‖₂`, by power iteration on `AᵀA`.
///
/// Stops when the relative change of the estimate drops below `tol` or after
/// `max_iter` iterations.
pub fn spectral_norm(a: &DenseMatrix, tol: f64, max_iter: usize) -> f64 {
    let n = a.cols();
    // Deterministic, non-degenerate start vector.
    let mut v = DenseVector::from_fn(n, |i| 1.0 + (i as f64 + 1.0).sqrt().fract());
    let v_norm = v.norm();
    v = v.scaled(1.0 / v_norm);
    let mut sigma2 = 0.0;
    for _ in 0..max_iter {
        let w = a.tr_matvec(&a.matvec(&v));
        let w_norm = w.norm();
        if w_norm == 0.0 {
            return 0.0;
        }
        let next = w_norm;
        v = w.scaled(1.0 / w_norm);
        let converged = (next - sigma2).abs() <= tol * next;
        sigma2 = next;
        if converged {
            break;
        }
    }
    sigma2.sqrt()
}
