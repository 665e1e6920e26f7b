use serde::{Deserialize, Serialize};

use super::grid::{build_grid, CandidateGrid};
use super::statistic::{
    compute_d, compute_vhat, eta_hat, gamma_hat, studentized_p_value, w_stat,
};
use super::{NpivData, NullHypothesis, Sieves, TestConfig};
use crate::basis::{deriv_constraints, ConstraintMatrix};
use crate::error::{NpivError, Result};
use crate::npiv::{
    fit_restricted_cone, fit_restricted_parametric, fit_unrestricted, NpivFit, RestrictedFit,
};
use crate::Matrix;

/// Per-dimension line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JRecord {
    pub j: usize,
    pub k: usize,
    pub d_hat: f64,
    pub v_hat: f64,
    pub s_hat: f64,
    pub gamma: usize,
    pub eta: f64,
    /// `n D / (eta v)`; serialized as `null` when infinite.
    pub w: f64,
    pub p_value: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    /// `structural` for the sieve test on `h`, `image` for the instrument-space variant.
    pub test: String,
    pub null: String,
    pub n: usize,
    pub alpha: f64,
    pub grid: CandidateGrid,
    pub per_j: Vec<JRecord>,
    pub reject: bool,
    pub j_reported: usize,
    pub j_selected: Vec<usize>,
    pub max_w: f64,
    pub p_value: f64,
    pub p_threshold: f64,
    pub warnings: Vec<String>,
}

/// Per-dimension quantities that do not depend on the level.
#[derive(Debug, Clone)]
pub struct ScanEntry {
    pub j: usize,
    pub k: usize,
    pub fit: NpivFit,
    pub restricted: RestrictedFit,
    pub constraints: Option<ConstraintMatrix>,
    pub d_hat: f64,
    pub v_hat: f64,
    pub s_hat: f64,
    pub gamma: usize,
}

/// Everything the decision needs, computed once per sample so several
/// levels can be evaluated cheaply.
#[derive(Debug, Clone)]
pub struct Scan {
    pub n: usize,
    pub null: NullHypothesis,
    pub grid: CandidateGrid,
    pub entries: Vec<ScanEntry>,
    pub sieves: Sieves,
    pub warnings: Vec<String>,
}

impl Scan {
    pub fn new(data: &NpivData, null: &NullHypothesis, config: &TestConfig) -> Result<Self> {
        data.validate()?;
        config.validate()?;
        if matches!(null, NullHypothesis::Shape(_)) && data.x.len() != 1 {
            return Err(NpivError::input(format!(
                "shape restrictions need a scalar X, got {} columns",
                data.x.len()
            )));
        }
        let sieves = Sieves::new(data, config);
        let grid = build_grid(data, &sieves, &config.grid)?;
        let mut warnings = Vec::new();
        if grid.fallback {
            warnings.push(format!(
                "empirical dimension bound {} is below every candidate; grid fell back to {:?}",
                grid.j_max_hat, grid.j_list
            ));
        }
        let z = match null {
            NullHypothesis::Parametric(model) => Some(model.design(&data.x)?),
            NullHypothesis::Shape(_) => None,
        };
        let mut entries = Vec::with_capacity(grid.len());
        for &j in &grid.j_list {
            let entry = scan_entry(data, null, &sieves, z.as_ref(), j, grid.shat_at(j))
                .map_err(|e| e.at_dimension(j))?;
            warnings.extend(entry.fit.warnings.iter().map(|w| format!("J = {j}: {w}")));
            entries.push(entry);
        }
        Ok(Self {
            n: data.n(),
            null: null.clone(),
            grid,
            entries,
            sieves,
            warnings,
        })
    }

    pub fn decide(&self, alpha: f64) -> Result<TestReport> {
        let raw: Vec<RawRecord> = self
            .entries
            .iter()
            .map(|e| RawRecord {
                j: e.j,
                k: e.k,
                d_hat: e.d_hat,
                v_hat: e.v_hat,
                s_hat: e.s_hat,
                gamma: e.gamma,
            })
            .collect();
        decide_records(
            "structural",
            &self.null.name(),
            self.n,
            alpha,
            &self.grid,
            &raw,
            self.warnings.clone(),
        )
    }
}

fn scan_entry(
    data: &NpivData,
    null: &NullHypothesis,
    sieves: &Sieves,
    z: Option<&Matrix>,
    j: usize,
    s_hat: Option<f64>,
) -> Result<ScanEntry> {
    let psi = sieves.psi_design(j, data)?;
    let b = sieves.b_design(j, data)?;
    let fit = fit_unrestricted(&data.y, &psi, &b, data.mu.as_deref())?;
    let (restricted, constraints) = match null {
        NullHypothesis::Shape(kind) => {
            let spec = &sieves.psi.specs(j, &data.x)[0];
            let m = deriv_constraints(spec, *kind)?;
            (fit_restricted_cone(&fit, &m)?, Some(m))
        }
        NullHypothesis::Parametric(_) => {
            let z = z.expect("parametric design");
            (fit_restricted_parametric(&data.y, z, &b)?, None)
        }
    };
    let d_hat = compute_d(&restricted.residuals, &fit);
    let v_hat = compute_vhat(&fit, &fit.residuals)?;
    let gamma = gamma_hat(constraints.as_ref(), &restricted, fit.j())?;
    if !(d_hat.is_finite() && v_hat.is_finite()) {
        return Err(NpivError::numerical("statistic or normalizer is not finite"));
    }
    Ok(ScanEntry {
        j: fit.j(),
        k: b.cols(),
        fit,
        restricted,
        constraints,
        d_hat,
        v_hat,
        s_hat: s_hat.unwrap_or(f64::NAN),
        gamma,
    })
}

pub(crate) struct RawRecord {
    pub j: usize,
    pub k: usize,
    pub d_hat: f64,
    pub v_hat: f64,
    pub s_hat: f64,
    pub gamma: usize,
}

pub(crate) fn decide_records(
    test: &str,
    null: &str,
    n: usize,
    alpha: f64,
    grid: &CandidateGrid,
    raw: &[RawRecord],
    warnings: Vec<String>,
) -> Result<TestReport> {
    let size = raw.len();
    let mut per_j = Vec::with_capacity(size);
    for r in raw {
        let eta = eta_hat(alpha, size, r.gamma)?;
        let w = w_stat(n, r.d_hat, r.v_hat, eta);
        per_j.push(JRecord {
            j: r.j,
            k: r.k,
            d_hat: r.d_hat,
            v_hat: r.v_hat,
            s_hat: r.s_hat,
            gamma: r.gamma,
            eta,
            w,
            p_value: studentized_p_value(n, r.d_hat, r.v_hat, r.gamma),
            reject: w > 1.0,
        });
    }
    let rejecting: Vec<usize> = per_j.iter().filter(|r| r.reject).map(|r| r.j).collect();
    let reject = !rejecting.is_empty();
    let mut best = 0;
    for (i, r) in per_j.iter().enumerate() {
        if r.w > per_j[best].w {
            best = i;
        }
    }
    let max_w = per_j[best].w;
    let (j_reported, j_selected) = if reject {
        (rejecting[0], rejecting)
    } else {
        (per_j[best].j, vec![per_j[best].j])
    };
    let p_value = per_j.iter().map(|r| r.p_value).fold(1.0, f64::min);
    Ok(TestReport {
        test: test.into(),
        null: null.into(),
        n,
        alpha,
        grid: grid.clone(),
        per_j,
        reject,
        j_reported,
        j_selected,
        max_w,
        p_value,
        p_threshold: alpha / size as f64,
        warnings,
    })
}

/// Adaptive sieve test of `null` at level `alpha`.
pub fn adaptive_test(
    data: &NpivData,
    null: &NullHypothesis,
    alpha: f64,
    config: &TestConfig,
) -> Result<TestReport> {
    Scan::new(data, null, config)?.decide(alpha)
}
