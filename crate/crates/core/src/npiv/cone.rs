//! Projection onto a polyhedral cone `{beta : M beta <= 0}` in the metric of
//! an SPD matrix `G`.
//!
//! After the change of variables `z = L' beta` (`G = L L'`) the problem is a
//! Euclidean projection onto `{z : A z <= 0}` with `A = M L^{-T}`, solved by a
//! primal active-set method started from the origin, which lies in every cone.

use serde::{Deserialize, Serialize};

use crate::error::{NpivError, Result};
use crate::linalg::{backward_sub_t, cholesky, dot, forward_sub, norm2, pinv, DenseMatrix};
use crate::scalar::Real;

/// Minimizer of `(v - beta)' G (v - beta)` over the cone with its KKT data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConeSolution<T> {
    pub beta: Vec<T>,
    /// Constraint rows with `|m_i' beta| <= tol * (1 + |beta| |m_i|)`.
    pub active_set: Vec<usize>,
    /// Lagrange multipliers, one per constraint row (zero off the working set).
    pub multipliers: Vec<T>,
    pub iterations: usize,
}

/// Tolerance used to declare a constraint row active at the solution.
pub const ACTIVE_TOL: f64 = 1e-8;

pub fn cone_project<T: Real>(
    v: &[T],
    g: &DenseMatrix<T>,
    m: &DenseMatrix<T>,
) -> Result<ConeSolution<T>> {
    let j = v.len();
    if g.shape() != (j, j) {
        return Err(NpivError::input(format!(
            "cone projection: metric is {}x{}, expected {j}x{j}",
            g.rows(),
            g.cols()
        )));
    }
    if m.cols() != j {
        return Err(NpivError::input(format!(
            "cone projection: constraint rows have {} columns, expected {j}",
            m.cols()
        )));
    }
    let l = cholesky(&g.symmetrized())
        .map_err(|e| NpivError::input(format!("cone projection metric is not SPD: {e}")))?;

    // z-coordinates: target z0 = L' v, rows a_i = L^{-1} m_i.
    let z0: Vec<T> = (0..j)
        .map(|r| (r..j).map(|c| l[(c, r)] * v[c]).sum())
        .collect();
    let rows: Vec<Vec<T>> = (0..m.rows()).map(|i| forward_sub(&l, m.row(i))).collect();
    let row_norms: Vec<T> = rows.iter().map(|r| norm2(r)).collect();

    let scale = T::one() + norm2(&z0);
    let step_tol = T::c(1e-13) * scale;
    let mult_tol = T::c(1e-12) * scale;
    let feas_tol = |i: usize| T::c(1e-13) * scale * row_norms[i].max(T::min_positive_value());

    let mut z = vec![T::zero(); j];
    let mut working: Vec<usize> = Vec::new();
    let mut lambda_w: Vec<T> = Vec::new();
    let max_iter = 50 * (m.rows() + j) + 100;
    let mut iterations = 0;
    let mut done = m.rows() == 0;
    if done {
        z.clone_from(&z0);
    }

    // Set after an unblocked full step: the iterate then minimizes over the
    // working face, so rounding in `p` must not trigger another step.
    let mut face_min = false;
    while !done {
        iterations += 1;
        if iterations > max_iter {
            return Err(NpivError::numerical(format!(
                "cone projection did not converge after {max_iter} iterations \
                 (J = {j}, {} constraints, working set size {})",
                m.rows(),
                working.len()
            )));
        }
        let resid: Vec<T> = z0.iter().zip(&z).map(|(&a, &b)| a - b).collect();
        let (p, lam) = null_space_step(&rows, &working, &resid, j)?;
        if face_min || norm2(&p) <= step_tol {
            face_min = false;
            // Stationary on the working face: check multiplier signs.
            let worst = lam
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -mult_tol)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal));
            match worst {
                None => {
                    lambda_w = lam;
                    done = true;
                }
                Some((pos, _)) => {
                    working.remove(pos);
                }
            }
            continue;
        }
        // Longest feasible step along p, capped at 1.
        let mut alpha = T::one();
        let mut blocking = None;
        for (i, a) in rows.iter().enumerate() {
            if working.contains(&i) {
                continue;
            }
            let ap = dot(a, &p);
            if ap > feas_tol(i) * T::c(1e-3) {
                let az = dot(a, &z);
                let t = (-az).max(T::zero()) / ap;
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        for (zi, pi) in z.iter_mut().zip(&p) {
            *zi += alpha * *pi;
        }
        match blocking {
            Some(i) => working.push(i),
            None => face_min = true,
        }
    }

    let beta = backward_sub_t(&l, &z);
    let beta_norm = norm2(&beta);
    let active_set = (0..m.rows())
        .filter(|&i| {
            let mi = m.row(i);
            dot(mi, &beta).abs() <= T::c(ACTIVE_TOL) * (T::one() + beta_norm * norm2(mi))
        })
        .collect();
    let mut multipliers = vec![T::zero(); m.rows()];
    for (&w, &lam) in working.iter().zip(&lambda_w) {
        multipliers[w] = lam.max(T::zero());
    }
    Ok(ConeSolution {
        beta,
        active_set,
        multipliers,
        iterations,
    })
}

/// Projection of `resid` onto the null space of the working rows and the
/// least-squares multipliers `(A_W A_W')^{-1} A_W resid`, with one round of
/// refinement since `A_W A_W'` squares the conditioning of the rows.
fn null_space_step<T: Real>(
    rows: &[Vec<T>],
    working: &[usize],
    resid: &[T],
    dim: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    if working.is_empty() {
        return Ok((resid.to_vec(), Vec::new()));
    }
    let w = working.len();
    let gram = DenseMatrix::from_fn(w, w, |a, b| dot(&rows[working[a]], &rows[working[b]]));
    let chol = cholesky(&gram).ok();
    let solver = match &chol {
        Some(_) => None,
        None => Some(pinv(&gram, T::c(1e-10))?),
    };
    let solve = |rhs: &[T]| match (&chol, &solver) {
        (Some(lg), _) => backward_sub_t(lg, &forward_sub(lg, rhs)),
        (None, Some(pi)) => pi.mat_vec(rhs),
        (None, None) => unreachable!(),
    };
    let mut p = resid.to_vec();
    let mut lam = vec![T::zero(); w];
    for _ in 0..2 {
        let rhs: Vec<T> = working.iter().map(|&i| dot(&rows[i], &p)).collect();
        let dl = solve(&rhs);
        for ((&i, &d), l) in working.iter().zip(&dl).zip(lam.iter_mut()) {
            *l += d;
            for (pk, &ak) in p.iter_mut().zip(&rows[i]) {
                *pk -= d * ak;
            }
        }
    }
    // Independent rows spanning the whole space leave no room to move.
    if chol.is_some() && w >= dim {
        p.iter_mut().for_each(|x| *x = T::zero());
    }
    Ok((p, lam))
}
