use serde::{Deserialize, Serialize};

use super::adaptive::Scan;
use super::statistic::{compute_d, eta_hat};
use super::{NpivData, NullHypothesis, TestConfig};
use crate::basis::{deriv_constraints, ConstraintKind};
use crate::error::{NpivError, Result};
use crate::npiv::ParametricModel;

/// A function whose membership in the confidence set is checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Candidate {
    /// Values `h(X_i)` at the sample points.
    Values(Vec<f64>),
    /// Coefficients in the configured `X` sieve, dimension = length.
    Coefficients(Vec<f64>),
    Parametric { model: ParametricModel, theta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsReport {
    pub contained: bool,
    pub alpha: f64,
    /// Dimension with the largest `n D(h) / (eta v)`.
    pub binding_j: usize,
    /// `(J, n D(h) / (eta v))`.
    pub ratios: Vec<(usize, f64)>,
}

impl Scan {
    /// Membership of a candidate given by its values at the sample points.
    pub fn cs_check(&self, h: &[f64], alpha: f64) -> Result<CsReport> {
        if h.len() != self.n {
            return Err(NpivError::input(format!(
                "candidate has {} values, expected {}",
                h.len(),
                self.n
            )));
        }
        let size = self.entries.len();
        let mut contained = true;
        let mut ratios = Vec::with_capacity(size);
        for e in &self.entries {
            let r: Vec<f64> = e.fit.y.iter().zip(h).map(|(y, h)| y - h).collect();
            let d = compute_d(&r, &e.fit);
            let eta = eta_hat(alpha, size, e.gamma)?;
            let nd = self.n as f64 * d;
            if nd > eta * e.v_hat {
                contained = false;
            }
            let ratio = if e.v_hat > 0.0 {
                nd / (eta * e.v_hat)
            } else if nd > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            ratios.push((e.j, ratio));
        }
        let mut binding = 0;
        for (i, r) in ratios.iter().enumerate() {
            if r.1 > ratios[binding].1 {
                binding = i;
            }
        }
        Ok(CsReport {
            contained,
            alpha,
            binding_j: ratios[binding].0,
            ratios,
        })
    }
}

fn candidate_values(
    candidate: &Candidate,
    data: &NpivData,
    null: &NullHypothesis,
    scan: &Scan,
) -> Result<Vec<f64>> {
    let tol = |v: &[f64]| 1e-8 * (1.0 + v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    match candidate {
        Candidate::Values(v) => {
            if let NullHypothesis::Shape(kind) = null {
                check_values_shape(&data.x[0], v, *kind, tol(v))?;
            }
            Ok(v.clone())
        }
        Candidate::Coefficients(beta) => {
            let j = beta.len();
            let psi = scan.sieves.psi_design(j, data)?;
            if psi.cols() != j {
                return Err(NpivError::input(format!(
                    "{j} coefficients do not match a sieve dimension"
                )));
            }
            if let NullHypothesis::Shape(kind) = null {
                let spec = &scan.sieves.psi.specs(j, &data.x)[0];
                let m = deriv_constraints(spec, *kind)?;
                let slack = m.apply(beta);
                let t = tol(beta);
                if let Some(i) = slack.iter().position(|s| *s > t) {
                    return Err(NpivError::input(format!(
                        "candidate violates the {} restriction (constraint row {i} = {:e})",
                        null.name(),
                        slack[i]
                    )));
                }
            }
            Ok(psi.mat_vec(beta))
        }
        Candidate::Parametric { model, theta } => {
            let z = model.design(&data.x)?;
            if theta.len() != z.cols() {
                return Err(NpivError::input(format!(
                    "{} parameters supplied for a {}-parameter {} model",
                    theta.len(),
                    z.cols(),
                    model.name()
                )));
            }
            let v = z.mat_vec(theta);
            if let NullHypothesis::Shape(kind) = null {
                check_values_shape(&data.x[0], &v, *kind, tol(&v))?;
            }
            Ok(v)
        }
    }
}

/// Discrete check of the shape restriction along the sorted sample.
fn check_values_shape(x: &[f64], h: &[f64], kind: ConstraintKind, tol: f64) -> Result<()> {
    if x.len() != h.len() {
        return Err(NpivError::input("candidate length differs from the sample"));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let pts: Vec<(f64, f64)> = idx.iter().map(|&i| (x[i], h[i])).collect();
    let fail = |what: &str| {
        Err(NpivError::input(format!("candidate is not {what} along the sample")))
    };
    match kind {
        ConstraintKind::MonotoneDecreasing => {
            if pts.windows(2).any(|w| w[1].1 > w[0].1 + tol) {
                return fail("decreasing");
            }
        }
        ConstraintKind::MonotoneIncreasing => {
            if pts.windows(2).any(|w| w[1].1 < w[0].1 - tol) {
                return fail("increasing");
            }
        }
        ConstraintKind::Convex | ConstraintKind::Concave => {
            let slopes: Vec<f64> = pts
                .windows(2)
                .filter(|w| w[1].0 - w[0].0 > 1e-12)
                .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
                .collect();
            let scale = tol * (1.0 + slopes.iter().fold(0.0f64, |m, s| m.max(s.abs())));
            let convex = kind == ConstraintKind::Convex;
            if slopes.windows(2).any(|s| {
                if convex {
                    s[1] < s[0] - scale
                } else {
                    s[1] > s[0] + scale
                }
            }) {
                return fail(if convex { "convex" } else { "concave" });
            }
        }
        ConstraintKind::Custom => {}
    }
    Ok(())
}

impl Scan {
    /// Membership of any candidate form, reusing this scan.
    pub fn cs_check_candidate(
        &self,
        candidate: &Candidate,
        data: &NpivData,
        null: &NullHypothesis,
        alpha: f64,
    ) -> Result<CsReport> {
        let h = candidate_values(candidate, data, null, self)?;
        self.cs_check(&h, alpha)
    }
}

/// Whether `candidate` lies in the level-`alpha` confidence set.
pub fn cs_contains(
    candidate: &Candidate,
    data: &NpivData,
    null: &NullHypothesis,
    alpha: f64,
    config: &TestConfig,
) -> Result<CsReport> {
    Scan::new(data, null, config)?.cs_check_candidate(candidate, data, null, alpha)
}
