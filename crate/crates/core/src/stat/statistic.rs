use crate::basis::ConstraintMatrix;
use crate::error::{NpivError, Result};
use crate::linalg::{
    default_rcond, frobenius_norm, pinv, rank, sym_eigen, sym_inv_sqrt, sym_sqrt, svd,
};
use crate::npiv::{NpivFit, RestrictedFit};
use crate::randdist::{chisq_quantile, chisq_sf};
use crate::Matrix;

/// Smallest singular value of `(B'B)^{-1/2} (B'Psi) (Psi' Omega Psi)^{-1/2}`.
pub fn compute_shat(psi: &Matrix, b: &Matrix, weights: Option<&[f64]>) -> Result<f64> {
    if psi.rows() != b.rows() {
        return Err(NpivError::input("compute_shat: Psi and B have different row counts"));
    }
    let btb = b.t_matmul(b).symmetrized();
    let g = match weights {
        Some(w) => psi.weighted_gram(w),
        None => psi.t_matmul(psi),
    }
    .symmetrized();
    let btb_is = inv_sqrt_checked(&btb, "B'B")?;
    let g_is = inv_sqrt_checked(&g, "Psi' Omega Psi")?;
    let cross = btb_is.matmul(&b.t_matmul(psi)).matmul(&g_is);
    let s = svd(&cross)?;
    Ok(s.s_min().max(0.0))
}

fn inv_sqrt_checked(g: &Matrix, name: &str) -> Result<Matrix> {
    let e = sym_eigen(g)?;
    let top = e.values.first().copied().unwrap_or(0.0);
    let bottom = e.values.last().copied().unwrap_or(0.0);
    if !(top > 0.0) || bottom <= default_rcond::<f64>(g.rows(), g.cols()) * top {
        return Err(NpivError::numerical(format!(
            "gram matrix {name} is singular (eigenvalues in [{bottom:e}, {top:e}])"
        )));
    }
    sym_inv_sqrt(g, default_rcond(g.rows(), g.cols()))
}

/// Leave-one-out statistic
/// `D = (u' H u - sum_i r_i^2 c_i' H c_i) / (n - 1)` with `u = C' r`,
/// `C = P_B Psi`, `H = A G A`; equal to the off-diagonal double sum over
/// `Q' Omega Q`.
pub fn compute_d(residuals: &[f64], fit: &NpivFit) -> f64 {
    let n = fit.n();
    debug_assert_eq!(residuals.len(), n);
    let h = sandwich(fit);
    let c = &fit.pb_psi;
    let u = c.t_mat_vec(residuals);
    let quad = quad_form(&h, &u);
    let mut diag = 0.0;
    for (i, &r) in residuals.iter().enumerate() {
        if r != 0.0 {
            diag += r * r * quad_form(&h, c.row(i));
        }
    }
    (quad - diag) / (n as f64 - 1.0)
}

fn sandwich(fit: &NpivFit) -> Matrix {
    fit.a.matmul(&fit.gram_weighted).matmul(&fit.a).symmetrized()
}

fn quad_form(h: &Matrix, v: &[f64]) -> f64 {
    let hv = h.mat_vec(v);
    v.iter().zip(&hv).map(|(a, b)| a * b).sum()
}

/// `|| G^{1/2} A C' diag(e^2) C A G^{1/2} ||_F` with unrestricted residuals `e`.
pub fn compute_vhat(fit: &NpivFit, residuals: &[f64]) -> Result<f64> {
    let e2: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let s = fit.pb_psi.weighted_gram(&e2);
    let x = fit.a.matmul(&s).matmul(&fit.a);
    let gh = sym_sqrt(&fit.gram_weighted)?;
    Ok(frobenius_norm(&gh.matmul(&x).matmul(&gh)))
}

/// Active rank `max(1, rank(M_active))` for inequality nulls, `J` for equality nulls.
pub fn gamma_hat(m: Option<&ConstraintMatrix>, restricted: &RestrictedFit, j: usize) -> Result<usize> {
    let Some(m) = m else {
        return Ok(j);
    };
    let active = restricted.active_set();
    if active.is_empty() {
        return Ok(1);
    }
    let sub = m.rows.select_rows(active);
    Ok(rank(&sub, 1e-10)?.max(1))
}

/// `(q(alpha / grid_size, gamma) - gamma) / sqrt(gamma)`.
pub fn eta_hat(alpha: f64, grid_size: usize, gamma: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(NpivError::input(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if grid_size == 0 || gamma == 0 {
        return Err(NpivError::input("grid size and gamma must be positive"));
    }
    let g = gamma as f64;
    Ok((chisq_quantile(alpha / grid_size as f64, gamma)? - g) / g.sqrt())
}

/// `W = n D / (eta v)`; `+inf` when `v = 0 < D`, `0` when both vanish.
pub fn w_stat(n: usize, d: f64, v: f64, eta: f64) -> f64 {
    if v > 0.0 {
        n as f64 * d / (eta * v)
    } else if d > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Upper-tail probability of `sqrt(gamma) n D / v + gamma` under `chi2_gamma`.
pub fn studentized_p_value(n: usize, d: f64, v: f64, gamma: usize) -> f64 {
    if v > 0.0 {
        let g = gamma as f64;
        let t = g.sqrt() * n as f64 * d / v + g;
        if t <= 0.0 {
            1.0
        } else {
            chisq_sf(t, gamma)
        }
    } else if d > 0.0 {
        0.0
    } else {
        1.0
    }
}

/// Image-space statistic with kernel `b(W_i)' (B'B/n)^- b(W_i')`.
pub fn compute_d_image(residuals: &[f64], b: &Matrix) -> Result<f64> {
    let n = b.rows();
    let k = b.cols();
    let btb_pinv = pinv(&b.t_matmul(b).symmetrized(), default_rcond(k, k))?.symmetrized();
    let u = b.t_mat_vec(residuals);
    let quad = quad_form(&btb_pinv, &u);
    let mut diag = 0.0;
    for (i, &r) in residuals.iter().enumerate() {
        if r != 0.0 {
            diag += r * r * quad_form(&btb_pinv, b.row(i));
        }
    }
    Ok((quad - diag) / (n as f64 - 1.0))
}

/// `|| (B'B)^{-1/2} B' diag(e^2) B (B'B)^{-1/2} ||_F`.
pub fn compute_vhat_image(residuals: &[f64], b: &Matrix) -> Result<f64> {
    let k = b.cols();
    let is = sym_inv_sqrt(&b.t_matmul(b).symmetrized(), default_rcond(k, k))?;
    let e2: Vec<f64> = residuals.iter().map(|e| e * e).collect();
    let mid = b.weighted_gram(&e2);
    Ok(frobenius_norm(&is.matmul(&mid).matmul(&is)))
}
