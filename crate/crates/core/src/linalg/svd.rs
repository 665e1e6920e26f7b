//! One-sided Jacobi SVD.
//!
//! Columns of the working matrix are rotated pairwise until mutually
//! orthogonal; the column norms are then the singular values. Accurate to
//! working precision for the small dense matrices the tests need (a few
//! hundred columns at most).

use serde::{Deserialize, Serialize};

use super::matrix::{dot, DenseMatrix};
use crate::error::{NpivError, Result};
use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U * diag(s) * Vt` with `min(m, n)` singular triplets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvdResult<T> {
    pub u: DenseMatrix<T>,
    pub singular_values: Vec<T>,
    pub vt: DenseMatrix<T>,
}

impl<T: Real> SvdResult<T> {
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let k = self.singular_values.len();
        let us = DenseMatrix::from_fn(self.u.rows(), k, |i, j| {
            self.u[(i, j)] * self.singular_values[j]
        });
        us.matmul(&self.vt)
    }

    pub fn s_max(&self) -> T {
        self.singular_values.first().copied().unwrap_or_else(T::zero)
    }

    pub fn s_min(&self) -> T {
        self.singular_values.last().copied().unwrap_or_else(T::zero)
    }

    /// Count of singular values above `rcond * s_max`.
    pub fn rank(&self, rcond: T) -> usize {
        let cut = rcond * self.s_max();
        self.singular_values
            .iter()
            .filter(|&&s| s > cut && s > T::zero())
            .count()
    }
}

pub fn svd<T: Real>(a: &DenseMatrix<T>) -> Result<SvdResult<T>> {
    if !a.is_finite() {
        return Err(NpivError::input("svd: matrix has non-finite entries"));
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a)
    } else {
        let t = jacobi_tall(&a.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            singular_values: t.singular_values,
            vt: t.u.transpose(),
        })
    }
}

fn jacobi_tall<T: Real>(a: &DenseMatrix<T>) -> Result<SvdResult<T>> {
    let (m, n) = a.shape();
    // Column-major working copies: cols[j] is column j of A*V.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            e
        })
        .collect();

    let eps = T::epsilon();
    let tiny = T::min_positive_value().sqrt();
    // Rounding in the column dot products is of order sqrt(m) eps.
    let tol = eps * T::from_count(m).sqrt().max(T::one());
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= tol * (alpha * beta).sqrt() || gamma.abs() < tiny * tiny {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::c(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(NpivError::numerical(format!(
            "svd: Jacobi iteration did not converge in {MAX_SWEEPS} sweeps ({m}x{n})"
        )));
    }

    let mut order: Vec<(T, usize)> = cols.iter().enumerate().map(|(j, c)| (dot(c, c).sqrt(), j)).collect();
    order.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap_or(std::cmp::Ordering::Equal).then(x.1.cmp(&y.1)));

    let s_max = order.first().map_or(T::zero(), |o| o.0);
    let null_cut = s_max * eps * T::from_count(m.max(n));
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut svals = Vec::with_capacity(n);
    let mut vt = DenseMatrix::zeros(n, n);
    let mut pending = Vec::new();
    for (k, &(s, j)) in order.iter().enumerate() {
        for (i, &vij) in v[j].iter().enumerate() {
            vt[(k, i)] = vij;
        }
        if s > null_cut && s > T::zero() {
            u_cols.push(cols[j].iter().map(|&x| x / s).collect());
            svals.push(s);
        } else {
            u_cols.push(Vec::new());
            svals.push(T::zero());
            pending.push(k);
        }
    }
    complete_basis(&mut u_cols, &pending, m);

    let u = DenseMatrix::from_fn(m, n, |i, k| u_cols[k][i]);
    Ok(SvdResult {
        u,
        singular_values: svals,
        vt,
    })
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let cp = &mut left[p];
    let cq = &mut right[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fill the listed (empty) columns with unit vectors orthogonal to the rest.
fn complete_basis<T: Real>(cols: &mut [Vec<T>], pending: &[usize], m: usize) {
    let mut candidate = 0usize;
    for &k in pending {
        while candidate < m {
            let mut e = vec![T::zero(); m];
            e[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for c in cols.iter().filter(|c| !c.is_empty()) {
                    let proj = dot(c, &e);
                    for (ei, &ci) in e.iter_mut().zip(c) {
                        *ei -= proj * ci;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if nrm > T::c(1e-3) {
                cols[k] = e.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}
