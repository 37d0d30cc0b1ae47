//! Small dense matrices: weight draws and Gram-block factorizations.

use std::ops::{Index, IndexMut};

use super::rng::{fill_gaussian, RngStream};
use crate::error::{precondition, Error, Result};

/// Largest Gram block [`cholesky_psd`] accepts.
pub const MAX_CHOLESKY_DIM: usize = 64;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        precondition(rows > 0 && cols > 0, || {
            format!("matrix dimensions must be positive, got {rows}x{cols}")
        })?;
        Ok(Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        })
    }

    pub fn identity(k: usize) -> Result<Self> {
        let mut m = Self::zeros(k, k)?;
        for i in 0..k {
            m[(i, i)] = 1.0;
        }
        Ok(m)
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        precondition(rows > 0 && cols > 0, || {
            format!("matrix dimensions must be positive, got {rows}x{cols}")
        })?;
        precondition(data.len() == rows * cols, || {
            format!("{} entries for a {rows}x{cols} matrix", data.len())
        })?;
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        precondition(rows.iter().all(|row| row.len() == c), || {
            "ragged rows".to_owned()
        })?;
        Self::from_row_major(r, c, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[j * self.rows + i] = self[(i, j)];
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data: t,
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        precondition(self.cols == other.rows, || {
            format!(
                "shape mismatch {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )
        })?;
        let mut out = Self::zeros(self.rows, other.cols)?;
        for i in 0..self.rows {
            for p in 0..self.cols {
                let a = self[(i, p)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(p, j)];
                }
            }
        }
        Ok(out)
    }

    /// `self * v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| super::dot(self.row(i), v)).collect()
    }

    /// `self^T * v`.
    pub fn matvec_transposed(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Entry-wise symmetry within `1e-12` relative to the largest entry.
    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let tol = 1e-12 * self.max_abs();
        (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// A `rows x cols` matrix of iid `N(0, variance)` entries drawn row-major
/// from the start of `stream`.
pub fn gauss_matrix(stream: &RngStream, rows: usize, cols: usize, variance: f64) -> Result<DenseMatrix> {
    precondition(variance > 0.0 && variance.is_finite(), || {
        format!("variance must be positive, got {variance}")
    })?;
    let mut m = DenseMatrix::zeros(rows, cols)?;
    fill_gaussian(&mut stream.rng(), &mut m.data, variance.sqrt());
    Ok(m)
}

/// Lower-triangular `F` with `F F^T = a` for a symmetric positive
/// semidefinite `a`.
///
/// Pivots in `[-pivot_tol, pivot_tol]` are treated as exact zeros and their
/// whole column is zeroed, so rank-deficient Gram matrices (e.g. from
/// repeated inputs) factor cleanly.
pub fn cholesky_psd(a: &DenseMatrix, pivot_tol: f64) -> Result<DenseMatrix> {
    let k = a.rows();
    precondition(a.cols() == k, || format!("{}x{} is not square", k, a.cols()))?;
    precondition(k <= MAX_CHOLESKY_DIM, || {
        format!("Gram block of size {k} exceeds {MAX_CHOLESKY_DIM}")
    })?;
    precondition(a.is_symmetric(), || "matrix is not symmetric".to_owned())?;
    precondition(pivot_tol >= 0.0, || format!("negative pivot tolerance {pivot_tol}"))?;

    let mut f = DenseMatrix::zeros(k, k)?;
    for j in 0..k {
        let mut pivot = a[(j, j)];
        for p in 0..j {
            pivot -= f[(j, p)] * f[(j, p)];
        }
        if pivot < -pivot_tol {
            return Err(Error::NotPsd { index: j, pivot });
        }
        if pivot <= pivot_tol {
            // column stays zero
            continue;
        }
        let diag = pivot.sqrt();
        f[(j, j)] = diag;
        for i in (j + 1)..k {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= f[(i, p)] * f[(j, p)];
            }
            f[(i, j)] = s / diag;
        }
    }
    Ok(f)
}
