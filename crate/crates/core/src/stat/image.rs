//! Test carried out in the instrument space: the statistic estimates
//! `E[E[Y - h^R(X) | W]^2]` with a series in `W` alone, and the grid runs over
//! the instrument dimension `K`.

use super::adaptive::{decide_records, RawRecord, TestReport};
use super::grid::{j_lower, j_max_exponent, CandidateGrid};
use super::statistic::{compute_d_image, compute_vhat_image};
use super::{GridMode, ImageVariant, NpivData, NullHypothesis, Sieves, TestConfig};
use crate::basis::zeta_for;
use crate::error::{NpivError, Result};
use crate::linalg::{default_rcond, frobenius_norm, svd, sym_eigen, DenseMatrix};
use crate::npiv::{fit_restricted_parametric, ParametricModel};
use crate::Matrix;

/// Level-free part of the image-space test.
#[derive(Debug, Clone)]
pub struct ImageScan {
    pub n: usize,
    pub null: String,
    pub grid: CandidateGrid,
    /// `(K, D, v, s, gamma)` per candidate.
    records: Vec<(usize, f64, f64, f64, usize)>,
    warnings: Vec<String>,
}

/// Orthonormal basis of `col(B)` with the directions of `P_B Z` removed.
fn residual_instrument_basis(b: &Matrix, z: &Matrix) -> Result<Matrix> {
    let (n, k) = b.shape();
    let sb = svd(b)?;
    let r = sb.rank(default_rcond(n, k));
    let ub = sb.u.select_cols(&(0..r).collect::<Vec<_>>());
    let rz = ub.t_matmul(z);
    let sr = svd(&rz)?;
    let p = sr.rank(default_rcond(rz.rows(), rz.cols()));
    let mut comp = DenseMatrix::identity(r);
    for c in 0..p {
        for i in 0..r {
            for j in 0..r {
                comp[(i, j)] -= sr.u[(i, c)] * sr.u[(j, c)];
            }
        }
    }
    let e = sym_eigen(&comp)?;
    let keep: Vec<usize> = (0..r).filter(|&i| e.values[i] > 0.5).collect();
    Ok(ub.matmul(&e.vectors.select_cols(&keep)))
}

/// Statistic and normalizer with kernel `U U'` for orthonormal `U`.
fn orthonormal_kernel_stats(u: &Matrix, e: &[f64]) -> (f64, f64) {
    let n = u.rows();
    let ue = u.t_mat_vec(e);
    let quad: f64 = ue.iter().map(|v| v * v).sum();
    let diag: f64 = (0..n)
        .map(|i| e[i] * e[i] * u.row(i).iter().map(|v| v * v).sum::<f64>())
        .sum();
    let e2: Vec<f64> = e.iter().map(|v| v * v).collect();
    let v = frobenius_norm(&u.weighted_gram(&e2));
    ((quad - diag) / (n as f64 - 1.0), v)
}

/// `s_min((B'B/n)^{-1/2}) = 1 / sqrt(lambda_max(B'B/n))`.
fn s_image(b: &crate::Matrix) -> Result<f64> {
    let n = b.rows() as f64;
    let e = sym_eigen(&b.t_matmul(b).scale(1.0 / n).symmetrized())?;
    let top = e.values[0];
    if !(top > 0.0) {
        return Err(NpivError::numerical("B'B/n has no positive eigenvalue"));
    }
    Ok(1.0 / top.sqrt())
}

impl ImageScan {
    pub fn new(data: &NpivData, model: &ParametricModel, config: &TestConfig) -> Result<Self> {
        data.validate()?;
        config.validate()?;
        let n = data.n();
        let sieves = Sieves::new(data, config);
        let min_dim = sieves.b.min_dim();
        let kl = j_lower(n);
        let kmax = j_max_exponent(n, kl);
        let (raw, hard_cap): (Vec<usize>, usize) = match &config.grid {
            GridMode::Knots => {
                let mut raw = vec![min_dim];
                raw.extend((0..=kmax).map(|j| min_dim + (kl << j)));
                (raw, min_dim + (kl << kmax))
            }
            _ => (
                (0..=kmax).map(|j| (kl << j).max(min_dim)).collect(),
                (kl << kmax).max(min_dim),
            ),
        };
        let design = |k: usize| sieves.b.design(k, &data.w);
        let mut shat = Vec::new();
        let mut k_max_hat = None;
        let mut last_ok = min_dim;
        let mut truncated = false;
        for k in (kl + 1).max(min_dim)..=hard_cap {
            let b = design(k)?;
            if b.cols() >= n {
                truncated = true;
                break;
            }
            let s = s_image(&b).map_err(|e| e.at_dimension(k))?;
            shat.push((k, s));
            last_ok = k;
            let zeta = zeta_for(sieves.b.family, b.cols());
            if 1.5 * zeta * zeta * ((k as f64).ln() / n as f64).sqrt() >= s {
                k_max_hat = Some(k);
                break;
            }
        }
        let k_max_hat = k_max_hat.unwrap_or(if truncated { last_ok } else { hard_cap });
        let mut fallback = false;
        let k_list = match &config.grid {
            GridMode::Explicit(list) => {
                let mut list = list.clone();
                list.sort_unstable();
                list.dedup();
                if let Some(&k) = list.iter().find(|&&k| k < min_dim || k >= n) {
                    return Err(NpivError::input(format!(
                        "instrument dimension {k} outside [{min_dim}, n)"
                    )));
                }
                list
            }
            _ => {
                let mut list: Vec<usize> = raw.into_iter().filter(|&k| k <= k_max_hat).collect();
                list.sort_unstable();
                list.dedup();
                if list.is_empty() {
                    fallback = true;
                    list.push(min_dim);
                }
                list
            }
        };
        let z = model.design(&data.x)?;
        let mut warnings = Vec::new();
        let mut k_list = k_list;
        if config.image_variant == ImageVariant::DofCorrected {
            let p = z.cols();
            let dropped: Vec<usize> = k_list.iter().copied().filter(|&k| k <= p).collect();
            if !dropped.is_empty() {
                k_list.retain(|&k| k > p);
                if k_list.is_empty() {
                    return Err(NpivError::input(format!(
                        "every instrument dimension is at most the {p} null parameters"
                    )));
                }
                warnings.push(format!(
                    "dropped K = {dropped:?}: no degrees of freedom left after fitting {p} parameters"
                ));
            }
        }
        let mut records = Vec::with_capacity(k_list.len());
        for &k in &k_list {
            let b = design(k)?;
            let fit = fit_restricted_parametric(&data.y, &z, &b).map_err(|e| e.at_dimension(k))?;
            let (d, v, gamma) = match config.image_variant {
                ImageVariant::Plain => (
                    compute_d_image(&fit.residuals, &b)?,
                    compute_vhat_image(&fit.residuals, &b)?,
                    b.cols(),
                ),
                ImageVariant::DofCorrected => {
                    let u = residual_instrument_basis(&b, &z)?;
                    if u.cols() == 0 {
                        return Err(NpivError::input(format!(
                            "K = {k} instruments leave no degrees of freedom after the parametric fit"
                        )));
                    }
                    let (d, v) = orthonormal_kernel_stats(&u, &fit.residuals);
                    (d, v, u.cols())
                }
            };
            let s = match shat.iter().find(|(kk, _)| *kk == k) {
                Some((_, s)) => *s,
                None => {
                    let s = s_image(&b)?;
                    shat.push((k, s));
                    s
                }
            };
            records.push((b.cols(), d, v, s, gamma));
        }
        shat.sort_by_key(|(k, _)| *k);
        Ok(Self {
            n,
            null: NullHypothesis::Parametric(model.clone()).name(),
            grid: CandidateGrid {
                mode: config.grid.clone(),
                j_lower: kl,
                j_max_exponent: kmax,
                hard_cap,
                j_list: k_list,
                j_max_hat: k_max_hat,
                shat,
                fallback,
            },
            records,
            warnings,
        })
    }

    pub fn decide(&self, alpha: f64) -> Result<TestReport> {
        let raw: Vec<RawRecord> = self
            .records
            .iter()
            .map(|&(k, d, v, s, gamma)| RawRecord {
                j: k,
                k,
                d_hat: d,
                v_hat: v,
                s_hat: s,
                gamma,
            })
            .collect();
        decide_records("image", &self.null, self.n, alpha, &self.grid, &raw, self.warnings.clone())
    }
}

/// Image-space adaptive test of a parametric null.
pub fn image_space_test(
    data: &NpivData,
    null: &NullHypothesis,
    alpha: f64,
    config: &TestConfig,
) -> Result<TestReport> {
    match null {
        NullHypothesis::Parametric(model) => ImageScan::new(data, model, config)?.decide(alpha),
        NullHypothesis::Shape(_) => Err(NpivError::input(
            "the image-space test supports parametric nulls only",
        )),
    }
}
