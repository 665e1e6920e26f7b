//! Sieve NPIV estimation: the unrestricted sieve 2SLS fit and the fits under
//! the null (cone projection for shape restrictions, parametric 2SLS for
//! equality restrictions).

mod cone;

use serde::{Deserialize, Serialize};

pub use cone::{cone_project, ConeSolution, ACTIVE_TOL};

use crate::basis::ConstraintMatrix;
use crate::error::{NpivError, Result};
use crate::linalg::{default_rcond, pinv, rank};
use crate::Matrix;

/// Unrestricted sieve 2SLS fit together with the pieces reused by the
/// statistic: `C = P_B Psi`, `A = [Psi' P_B Psi]^-` and `G = Psi' Omega Psi`.
#[derive(Debug, Clone)]
pub struct NpivFit {
    pub y: Vec<f64>,
    pub beta: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub psi: Matrix,
    pub pb_psi: Matrix,
    pub a: Matrix,
    pub gram_weighted: Matrix,
    pub weights: Vec<f64>,
    /// Rank of `Psi' P_B Psi`; below `J` the fit uses the pseudo-inverse.
    pub rank: usize,
    pub warnings: Vec<String>,
}

impl NpivFit {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn j(&self) -> usize {
        self.psi.cols()
    }

    pub fn rank_deficient(&self) -> bool {
        self.rank < self.j()
    }

    /// `Q r = sqrt(n) Psi A Psi' P_B r`.
    pub fn apply_q(&self, r: &[f64]) -> Vec<f64> {
        let u = self.pb_psi.t_mat_vec(r);
        let v = self.a.mat_vec(&u);
        let s = (self.n() as f64).sqrt();
        self.psi.mat_vec(&v).into_iter().map(|x| s * x).collect()
    }
}

fn check_weights(n: usize, mu: Option<&[f64]>) -> Result<Vec<f64>> {
    match mu {
        None => Ok(vec![1.0; n]),
        Some(w) => {
            if w.len() != n {
                return Err(NpivError::input(format!(
                    "weights have length {}, expected {n}",
                    w.len()
                )));
            }
            if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(NpivError::input(format!(
                    "weight {i} is {} but weights must be positive and finite",
                    w[i]
                )));
            }
            Ok(w.to_vec())
        }
    }
}

/// Sieve 2SLS `beta = [Psi' P_B Psi]^- Psi' P_B Y` from precomputed designs.
pub fn fit_unrestricted(y: &[f64], psi: &Matrix, b: &Matrix, mu: Option<&[f64]>) -> Result<NpivFit> {
    let n = y.len();
    let (j, k) = (psi.cols(), b.cols());
    if psi.rows() != n || b.rows() != n {
        return Err(NpivError::input(format!(
            "design rows ({}, {}) do not match the {n} observations",
            psi.rows(),
            b.rows()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(NpivError::input(format!("response {i} is not finite")));
    }
    if k < j {
        return Err(NpivError::input(format!(
            "instrument dimension K = {k} is below the sieve dimension J = {j}"
        )));
    }
    if n <= k {
        return Err(NpivError::input(format!(
            "n = {n} observations cannot support K = {k} instruments"
        )));
    }
    let weights = check_weights(n, mu)?;
    let mut warnings = Vec::new();

    let btb = b.t_matmul(b).symmetrized();
    let btb_pinv = pinv(&btb, default_rcond(k, k))?;
    let bt_psi = b.t_matmul(psi);
    let m1 = btb_pinv.matmul(&bt_psi);
    let pb_psi = b.matmul(&m1);
    let ptpbp = bt_psi.t_matmul(&m1).symmetrized();
    let rcond = default_rcond(j, j);
    let a = pinv(&ptpbp, rcond)?.symmetrized();
    let r = rank(&ptpbp, rcond)?;
    if r < j {
        warnings.push(format!(
            "Psi' P_B Psi has rank {r} < J = {j}; using the pseudo-inverse"
        ));
        log::warn!("{}", warnings.last().unwrap());
    }
    let rhs = m1.t_mat_vec(&b.t_mat_vec(y));
    let beta = a.mat_vec(&rhs);
    let fitted = psi.mat_vec(&beta);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let gram_weighted = psi.weighted_gram(&weights).symmetrized();
    Ok(NpivFit {
        y: y.to_vec(),
        beta,
        fitted,
        residuals,
        psi: psi.clone(),
        pb_psi,
        a,
        gram_weighted,
        weights,
        rank: r,
        warnings,
    })
}

/// Parametric family for equality nulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametricModel {
    /// `theta_0 + sum_d theta_d x_d`.
    Linear,
    /// Intercept, linear and squared terms in each coordinate.
    Quadratic,
    /// Regressors supplied directly (n x p).
    Custom(Matrix),
}

impl ParametricModel {
    pub fn name(&self) -> &'static str {
        match self {
            ParametricModel::Linear => "linear",
            ParametricModel::Quadratic => "quadratic",
            ParametricModel::Custom(_) => "custom",
        }
    }

    /// Regressor matrix for `x` given column-wise (one vector per coordinate).
    pub fn design(&self, x: &[Vec<f64>]) -> Result<Matrix> {
        let n = x.first().map_or(0, Vec::len);
        match self {
            ParametricModel::Linear => Ok(Matrix::from_fn(n, 1 + x.len(), |i, c| {
                if c == 0 {
                    1.0
                } else {
                    x[c - 1][i]
                }
            })),
            ParametricModel::Quadratic => {
                let d = x.len();
                Ok(Matrix::from_fn(n, 1 + 2 * d, |i, c| match c {
                    0 => 1.0,
                    c if c <= d => x[c - 1][i],
                    c => x[c - d - 1][i].powi(2),
                }))
            }
            ParametricModel::Custom(m) => {
                if m.rows() != n {
                    return Err(NpivError::input(format!(
                        "custom parametric design has {} rows, expected {n}",
                        m.rows()
                    )));
                }
                Ok(m.clone())
            }
        }
    }

    pub fn n_params(&self, coords: usize) -> usize {
        match self {
            ParametricModel::Linear => 1 + coords,
            ParametricModel::Quadratic => 1 + 2 * coords,
            ParametricModel::Custom(m) => m.cols(),
        }
    }

    pub fn eval(&self, theta: &[f64], x: &[f64]) -> f64 {
        match self {
            ParametricModel::Linear => {
                theta[0] + x.iter().zip(&theta[1..]).map(|(a, b)| a * b).sum::<f64>()
            }
            ParametricModel::Quadratic => {
                let d = x.len();
                theta[0]
                    + x.iter()
                        .enumerate()
                        .map(|(c, v)| theta[1 + c] * v + theta[1 + d + c] * v * v)
                        .sum::<f64>()
            }
            ParametricModel::Custom(_) => f64::NAN,
        }
    }
}

/// How the null-restricted fit was obtained.
#[derive(Debug, Clone)]
pub enum Restriction {
    Cone(ConeSolution<f64>),
    Parametric { theta: Vec<f64> },
}

/// Fit under the null.
#[derive(Debug, Clone)]
pub struct RestrictedFit {
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub restriction: Restriction,
}

impl RestrictedFit {
    pub fn active_set(&self) -> &[usize] {
        match &self.restriction {
            Restriction::Cone(c) => &c.active_set,
            Restriction::Parametric { .. } => &[],
        }
    }

    /// Sieve coefficients for cone fits.
    pub fn beta(&self) -> Option<&[f64]> {
        match &self.restriction {
            Restriction::Cone(c) => Some(&c.beta),
            Restriction::Parametric { .. } => None,
        }
    }
}

/// Project the unrestricted coefficients onto `{M beta <= 0}` in the
/// `Psi' Omega Psi` metric.
pub fn fit_restricted_cone(fit: &NpivFit, m: &ConstraintMatrix) -> Result<RestrictedFit> {
    if m.dim() != fit.j() {
        return Err(NpivError::input(format!(
            "constraint matrix has {} columns but the sieve has J = {}",
            m.dim(),
            fit.j()
        )));
    }
    let sol = cone_project(&fit.beta, &fit.gram_weighted, &m.rows)?;
    let fitted = fit.psi.mat_vec(&sol.beta);
    let residuals = fit.y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(RestrictedFit {
        fitted,
        residuals,
        restriction: Restriction::Cone(sol),
    })
}

/// Parametric 2SLS `theta = (Z' P_B Z)^{-1} Z' P_B Y`.
pub fn fit_restricted_parametric(y: &[f64], z: &Matrix, b: &Matrix) -> Result<RestrictedFit> {
    let n = y.len();
    if z.rows() != n || b.rows() != n {
        return Err(NpivError::input("parametric fit: row counts differ"));
    }
    let (p, k) = (z.cols(), b.cols());
    if k < p {
        return Err(NpivError::input(format!(
            "parametric fit needs at least {p} instruments, got {k}"
        )));
    }
    let btb_pinv = pinv(&b.t_matmul(b).symmetrized(), default_rcond(k, k))?;
    let btz = b.t_matmul(z);
    let m1 = btb_pinv.matmul(&btz);
    let zpz = btz.t_matmul(&m1).symmetrized();
    let rcond = default_rcond(p, p);
    if rank(&zpz, rcond)? < p {
        return Err(NpivError::input(
            "parametric null is not identified: Z' P_B Z is singular",
        ));
    }
    let theta = pinv(&zpz, rcond)?.mat_vec(&m1.t_mat_vec(&b.t_mat_vec(y)));
    let fitted = z.mat_vec(&theta);
    let residuals = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Ok(RestrictedFit {
        fitted,
        residuals,
        restriction: Restriction::Parametric { theta },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{deriv_constraints, eval_design, BasisSpec, ConstraintKind};
    use crate::linalg::projection_matrix;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn iv_data(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut w = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let zw: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let u: f64 = rng.sample(StandardNormal);
            let xs = 0.6 * zw + 0.8 * e;
            x.push(crate::randdist::std_normal_cdf(xs));
            w.push(crate::randdist::std_normal_cdf(zw));
            y.push(1.0 - 0.5 * x.last().unwrap() + 0.3 * e + 0.2 * u);
        }
        (y, x, w)
    }

    #[test]
    fn exactly_identified_reduces_to_least_squares() {
        let (y, x, _) = iv_data(200, 1);
        let psi = eval_design(&BasisSpec::bspline(3, 5), &x).unwrap();
        let fit = fit_unrestricted(&y, &psi, &psi, None).unwrap();
        let ols = pinv(&psi.t_matmul(&psi), 1e-14)
            .unwrap()
            .mat_vec(&psi.t_mat_vec(&y));
        for (a, b) in fit.beta.iter().zip(&ols) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn normal_equations_hold() {
        let (y, x, w) = iv_data(300, 2);
        let psi = eval_design(&BasisSpec::bspline(3, 4), &x).unwrap();
        let b = eval_design(&BasisSpec::bspline(3, 8), &w).unwrap();
        let fit = fit_unrestricted(&y, &psi, &b, None).unwrap();
        let pb = projection_matrix(&b).unwrap();
        let lhs = psi.t_matmul(&pb.matmul(&psi)).mat_vec(&fit.beta);
        let rhs = psi.t_mat_vec(&pb.mat_vec(&y));
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in lhs.iter().zip(&rhs) {
            assert!((a - b).abs() <= 1e-8 * scale);
        }
        assert!(!fit.rank_deficient());
    }

    #[test]
    fn linear_2sls_matches_textbook_iv() {
        let (y, x, w) = iv_data(400, 3);
        let z = ParametricModel::Linear.design(std::slice::from_ref(&x)).unwrap();
        let b = ParametricModel::Linear.design(std::slice::from_ref(&w)).unwrap();
        let fit = fit_restricted_parametric(&y, &z, &b).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (mx, mw, my) = (mean(&x), mean(&w), mean(&y));
        let cov = |a: &[f64], ma: f64, b: &[f64], mb: f64| {
            a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum::<f64>()
        };
        let slope = cov(&w, mw, &y, my) / cov(&w, mw, &x, mx);
        let Restriction::Parametric { theta } = &fit.restriction else {
            panic!()
        };
        assert_abs_diff_eq!(theta[1], slope, epsilon = 1e-10);
        assert_abs_diff_eq!(theta[0], my - slope * mx, epsilon = 1e-10);
    }

    #[test]
    fn input_errors() {
        let (y, x, w) = iv_data(30, 4);
        let psi = eval_design(&BasisSpec::bspline(3, 6), &x).unwrap();
        let b = eval_design(&BasisSpec::bspline(3, 4), &w).unwrap();
        assert!(fit_unrestricted(&y, &psi, &b, None).unwrap_err().is_input());
        let big = eval_design(&BasisSpec::bspline(3, 30), &w).unwrap();
        assert!(fit_unrestricted(&y, &psi, &big, None).unwrap_err().is_input());
        let b = eval_design(&BasisSpec::bspline(3, 8), &w).unwrap();
        let mu = vec![-1.0; 30];
        assert!(fit_unrestricted(&y, &psi, &b, Some(&mu)).unwrap_err().is_input());
    }

    #[test]
    fn cone_fit_is_monotone_and_keeps_monotone_fits() {
        let (y, x, w) = iv_data(500, 5);
        let spec = BasisSpec::bspline(3, 5);
        let psi = eval_design(&spec, &x).unwrap();
        let b = eval_design(&BasisSpec::bspline(3, 10), &w).unwrap();
        let fit = fit_unrestricted(&y, &psi, &b, None).unwrap();
        let inc = deriv_constraints(&spec, ConstraintKind::MonotoneIncreasing).unwrap();
        let r = fit_restricted_cone(&fit, &inc).unwrap();
        let beta = r.beta().unwrap();
        assert!(inc.apply(beta).iter().all(|v| *v <= 1e-10));
        let dec = deriv_constraints(&spec, ConstraintKind::MonotoneDecreasing).unwrap();
        if dec.apply(&fit.beta).iter().all(|v| *v <= 0.0) {
            let r = fit_restricted_cone(&fit, &dec).unwrap();
            for (a, b) in r.beta().unwrap().iter().zip(&fit.beta) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn apply_q_matches_dense_operator() {
        let (y, x, w) = iv_data(40, 6);
        let psi = eval_design(&BasisSpec::bspline(3, 4), &x).unwrap();
        let b = eval_design(&BasisSpec::bspline(3, 6), &w).unwrap();
        let fit = fit_unrestricted(&y, &psi, &b, None).unwrap();
        let pb = projection_matrix(&b).unwrap();
        let a = pinv(&psi.t_matmul(&pb.matmul(&psi)), 1e-13).unwrap();
        let q = psi.matmul(&a).matmul(&psi.t_matmul(&pb)).scale(40f64.sqrt());
        let r: Vec<f64> = (0..40).map(|i| (i as f64).sin()).collect();
        for (u, v) in fit.apply_q(&r).iter().zip(q.mat_vec(&r)) {
            assert_abs_diff_eq!(*u, v, epsilon = 1e-10);
        }
    }
}
