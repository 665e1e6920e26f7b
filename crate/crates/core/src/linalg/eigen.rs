//! Cyclic Jacobi eigen-decomposition of symmetric matrices.

use super::matrix::DenseMatrix;
use crate::error::{NpivError, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues in non-increasing order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: DenseMatrix<T>,
}

impl<T: Real> SymEigen<T> {
    /// `V * diag(f(lambda)) * V'`.
    pub fn reassemble(&self, f: impl Fn(T) -> T) -> DenseMatrix<T> {
        let n = self.values.len();
        let fv: Vec<T> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = DenseMatrix::zeros(n, n);
        for k in 0..n {
            if fv[k] == T::zero() {
                continue;
            }
            for i in 0..n {
                let a = self.vectors[(i, k)] * fv[k];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * self.vectors[(j, k)];
                }
            }
        }
        out
    }
}

/// Eigen-decomposition of a symmetric matrix; only the lower triangle's
/// symmetric part is meaningful, callers symmetrize beforehand.
pub fn sym_eigen<T: Real>(g: &DenseMatrix<T>) -> Result<SymEigen<T>> {
    let n = g.rows();
    if g.cols() != n {
        return Err(NpivError::input("sym_eigen: matrix is not square"));
    }
    let mut a = g.clone();
    let mut v = DenseMatrix::identity(n);
    let eps = T::epsilon();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += a[(i, i)] * a[(i, i)];
            for j in 0..i {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() <= eps * diag.sqrt() || off == T::zero() {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Negligible against both diagonal entries: annihilate directly.
                if apq.abs() <= eps * T::c(0.01) * (app.abs() * aqq.abs()).sqrt() {
                    a[(p, q)] = T::zero();
                    a[(q, p)] = T::zero();
                    continue;
                }
                let theta = (aqq - app) / (T::c(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(NpivError::numerical(format!(
            "sym_eigen: Jacobi iteration did not converge in {MAX_SWEEPS} sweeps (n = {n})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        a[(y, y)]
            .partial_cmp(&a[(x, x)])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| a[(k, k)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}
