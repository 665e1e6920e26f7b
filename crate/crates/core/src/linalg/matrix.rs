use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{NpivError, Result};
use crate::scalar::Real;

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    /// Build from row-major entries, checking shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(NpivError::input(format!(
                "matrix must have at least one row and column, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(NpivError::input(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(NpivError::input(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Shape-checked but unvalidated constructor for internal results.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![T::zero(); rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::from_raw(rows, cols, data)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(NpivError::input("ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    /// Single-column matrix.
    pub fn column_vector(v: &[T]) -> Self {
        Self::from_raw(v.len(), 1, v.to_vec())
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
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let o_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in o_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self' * other` without forming the transpose.
    pub fn t_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Self::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = other.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let o_row = out.row_mut(i);
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other'`.
    pub fn matmul_t(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        Self::from_fn(self.rows, other.rows, |i, j| dot(self.row(i), other.row(j)))
    }

    /// `self' * diag(w) * self`.
    pub fn weighted_gram(&self, w: &[T]) -> Self {
        assert_eq!(w.len(), self.rows);
        let mut out = Self::zeros(self.cols, self.cols);
        for r in 0..self.rows {
            let row = self.row(r);
            let wr = w[r];
            for i in 0..self.cols {
                let a = row[i] * wr;
                if a == T::zero() {
                    continue;
                }
                let o_row = out.row_mut(i);
                for j in i..self.cols {
                    o_row[j] += a * row[j];
                }
            }
        }
        for i in 0..self.cols {
            for j in 0..i {
                out[(i, j)] = out[(j, i)];
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len(), "mat_vec shape mismatch");
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self' * v`.
    pub fn t_mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.rows, v.len(), "t_mat_vec shape mismatch");
        let mut out = vec![T::zero(); self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == T::zero() {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(r)) {
                *o += a * vr;
            }
        }
        out
    }

    pub fn scale(&self, c: T) -> Self {
        Self::from_raw(self.rows, self.cols, self.data.iter().map(|&v| v * c).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
        )
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape());
        Self::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        )
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self::from_raw(idx.len(), self.cols, data)
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        Self::from_fn(self.rows, idx.len(), |i, j| self[(i, idx[j])])
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        Self::from_fn(self.rows, cols, |i, j| {
            if j < self.cols {
                self[(i, j)]
            } else {
                other[(i, j - self.cols)]
            }
        })
    }

    pub fn trace(&self) -> T {
        self.diag().into_iter().sum()
    }

    /// Largest absolute entry of `self - self'` (square matrices only).
    pub fn max_asymmetry(&self) -> T {
        assert_eq!(self.rows, self.cols);
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)]) * T::c(0.5)
        })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| U::c(v.as_f64())).collect(),
        )
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm2<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl<T: fmt::Debug> fmt::Debug for DenseMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for v in &self.data[i * self.cols..(i + 1) * self.cols] {
                write!(f, "{:>12.6?} ", v)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}
