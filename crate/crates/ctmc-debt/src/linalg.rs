// SPDX-License-Identifier: Apache-2.0

//! Dense and tridiagonal matrices with the handful of kernels the pricers need.

use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    /// Wraps row-major storage.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix entry by entry.
    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let data = (0..rows * cols).map(|k| f(k / cols, k % cols)).collect();
        Self { rows, cols, data }
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major storage.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Mutable row-major storage.
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Row `i`.
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(rhs.row(k)) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "matvec dimension mismatch");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum()).collect()
    }

    /// `v · self` (row vector times matrix).
    pub fn vecmat(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "vecmat dimension mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (i, &a) in v.iter().enumerate() {
            for (o, &b) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * b;
            }
        }
        out
    }

    /// Transposed copy.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self · s`.
    pub fn scaled(&self, s: T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| x * s).collect() }
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, other: &Self, s: T) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + s * b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.rows).map(|i| self.row(i).iter().map(|x| x.abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    /// Solves `self · X = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self> {
        let n = self.rows;
        if self.cols != n {
            return Err(Error::Dimension { expected: n, found: self.cols });
        }
        if rhs.rows != n {
            return Err(Error::Dimension { expected: n, found: rhs.rows });
        }
        let mut a = self.clone();
        let mut x = rhs.clone();
        let nc = x.cols;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].abs().partial_cmp(&a[(j, k)].abs()).unwrap_or(std::cmp::Ordering::Equal))
                .unwrap_or(k);
            let pivot = a[(p, k)];
            if !(pivot.abs() > T::zero()) || !pivot.is_finite() {
                return Err(Error::Exponential(format!("singular Padé denominator at column {k}")));
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                for j in 0..nc {
                    x.data.swap(k * nc + j, p * nc + j);
                }
            }
            for i in k + 1..n {
                let f = a[(i, k)] / pivot;
                if f == T::zero() {
                    continue;
                }
                a[(i, k)] = f;
                for j in k + 1..n {
                    let v = a[(k, j)];
                    a[(i, j)] = a[(i, j)] - f * v;
                }
                for j in 0..nc {
                    let v = x[(k, j)];
                    x[(i, j)] = x[(i, j)] - f * v;
                }
            }
        }
        for k in (0..n).rev() {
            let pivot = a[(k, k)];
            for j in 0..nc {
                let mut s = x[(k, j)];
                for i in k + 1..n {
                    s = s - a[(k, i)] * x[(i, j)];
                }
                x[(k, j)] = s / pivot;
            }
        }
        Ok(x)
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Tridiagonal matrix stored by diagonals.
///
/// `lower[i]` is entry `(i+1, i)`, `upper[i]` is entry `(i, i+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    /// Sub-diagonal, length `n − 1`.
    pub lower: Vec<T>,
    /// Diagonal, length `n`.
    pub diag: Vec<T>,
    /// Super-diagonal, length `n − 1`.
    pub upper: Vec<T>,
}

impl<T: Real> Tridiagonal<T> {
    /// Zero matrix of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![T::zero(); n.saturating_sub(1)],
            diag: vec![T::zero(); n],
            upper: vec![T::zero(); n.saturating_sub(1)],
        }
    }

    /// Dimension.
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Entry `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> T {
        if i == j {
            self.diag[i]
        } else if j + 1 == i {
            self.lower[j]
        } else if i + 1 == j {
            self.upper[i]
        } else {
            T::zero()
        }
    }

    /// Dense copy.
    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Transpose.
    pub fn transpose(&self) -> Self {
        Self { lower: self.upper.clone(), diag: self.diag.clone(), upper: self.lower.clone() }
    }

    /// `self − diag(d)`.
    pub fn minus_diagonal(&self, d: &[T]) -> Self {
        let mut out = self.clone();
        for (a, &b) in out.diag.iter_mut().zip(d) {
            *a = *a - b;
        }
        out
    }

    /// `self · v`.
    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); v.len()];
        self.apply_block(v, 1, &mut out);
        out
    }

    /// `out = self · x` where `x` is `dim × ncols` row-major.
    pub fn apply_block(&self, x: &[T], ncols: usize, out: &mut [T]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n * ncols);
        debug_assert_eq!(out.len(), n * ncols);
        for i in 0..n {
            let d = self.diag[i];
            let o = &mut out[i * ncols..(i + 1) * ncols];
            let xi = &x[i * ncols..(i + 1) * ncols];
            for (a, &b) in o.iter_mut().zip(xi) {
                *a = d * b;
            }
            if i > 0 {
                let l = self.lower[i - 1];
                for (a, &b) in o.iter_mut().zip(&x[(i - 1) * ncols..i * ncols]) {
                    *a = *a + l * b;
                }
            }
            if i + 1 < n {
                let u = self.upper[i];
                for (a, &b) in o.iter_mut().zip(&x[(i + 1) * ncols..(i + 2) * ncols]) {
                    *a = *a + u * b;
                }
            }
        }
    }

    /// Largest row exit rate `max(−diag)`, at least zero.
    pub fn max_exit_rate(&self) -> T {
        self.diag.iter().fold(T::zero(), |m, &d| m.max(-d))
    }
}
