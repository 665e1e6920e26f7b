//! The adaptive test: per-dimension statistic and normalizer, the random
//! exponential scan over sieve dimensions, the Bonferroni-calibrated decision,
//! confidence-set membership and the image-space variant.

mod adaptive;
mod cs;
mod grid;
mod image;
mod statistic;

use serde::{Deserialize, Serialize};

pub use adaptive::{adaptive_test, JRecord, Scan, ScanEntry, TestReport};
pub use cs::{cs_contains, Candidate, CsReport};
pub use grid::{build_grid, j_lower, j_max_exponent, raw_dyadic, CandidateGrid};
pub use image::{image_space_test, ImageScan};
pub use statistic::{
    compute_d, compute_d_image, compute_shat, compute_vhat, compute_vhat_image, eta_hat,
    gamma_hat, studentized_p_value, w_stat,
};

use crate::basis::{BasisFamily, ConstraintKind, SieveSpec};
use crate::error::{NpivError, Result};
use crate::npiv::ParametricModel;
use crate::Matrix;

/// Smallest sample size accepted by the test.
pub const MIN_N: usize = 20;

/// Observations `(Y_i, X_i, W_i)` with coordinates stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpivData {
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    /// Optional per-observation weights `mu(X_i)`; `None` means `mu = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

impl NpivData {
    /// Univariate `X` and `W`.
    pub fn univariate(y: Vec<f64>, x: Vec<f64>, w: Vec<f64>) -> Self {
        Self {
            y,
            x: vec![x],
            w: vec![w],
            mu: None,
        }
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n < MIN_N {
            return Err(NpivError::input(format!(
                "need at least {MIN_N} observations, got {n}"
            )));
        }
        if self.x.is_empty() || self.w.is_empty() {
            return Err(NpivError::input("need at least one X and one W column"));
        }
        let cols = std::iter::once(("y", 0, &self.y))
            .chain(self.x.iter().enumerate().map(|(i, c)| ("x", i + 1, c)))
            .chain(self.w.iter().enumerate().map(|(i, c)| ("w", i + 1, c)))
            .chain(self.mu.iter().map(|c| ("mu", 0, c)));
        for (name, idx, col) in cols {
            if col.len() != n {
                return Err(NpivError::input(format!(
                    "column {name}{} has {} rows, expected {n}",
                    if idx > 0 { idx.to_string() } else { String::new() },
                    col.len()
                )));
            }
            if let Some(r) = col.iter().position(|v| !v.is_finite()) {
                return Err(NpivError::input(format!(
                    "column {name} has a non-finite value in row {}",
                    r + 1
                )));
            }
            // A constant regressor or instrument leaves no sieve to fit.
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            if (name == "x" || name == "w") && !(hi > lo) {
                return Err(NpivError::input(format!("column {name}{idx} is constant")));
            }
        }
        if let Some(mu) = &self.mu {
            if let Some(r) = mu.iter().position(|v| *v <= 0.0) {
                return Err(NpivError::input(format!("weight in row {} is not positive", r + 1)));
            }
        }
        Ok(())
    }

    /// Row `i` of `X` as a vector.
    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.iter().map(|c| c[i]).collect()
    }
}

/// The restriction being tested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullHypothesis {
    /// Inequality restriction expressed through derivative constraints.
    Shape(ConstraintKind),
    /// Equality restriction: `h` belongs to a parametric family.
    Parametric(ParametricModel),
}

impl NullHypothesis {
    pub fn name(&self) -> String {
        match self {
            NullHypothesis::Shape(k) => match k {
                ConstraintKind::MonotoneDecreasing => "decreasing".into(),
                ConstraintKind::MonotoneIncreasing => "increasing".into(),
                ConstraintKind::Convex => "convex".into(),
                ConstraintKind::Concave => "concave".into(),
                ConstraintKind::Custom => "custom".into(),
            },
            NullHypothesis::Parametric(m) => m.name().into(),
        }
    }

    pub fn is_equality(&self) -> bool {
        matches!(self, NullHypothesis::Parametric(_))
    }
}

/// How the candidate dimensions are generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// `{J_ 2^j}` lifted to the basis minimum, capped at the empirical upper bound.
    Dyadic,
    /// Dyadic interior-knot counts `{0} U {J_ 2^j}` translated into
    /// dimensions `order + knots`, capped at the empirical upper bound.
    Knots,
    /// User-supplied dimensions, used as given.
    Explicit(Vec<usize>),
}

/// Calibration of the image-space statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageVariant {
    /// Kernel `P_B`, chi-square with `K` degrees of freedom.
    #[default]
    Plain,
    /// Kernel `P_B - P_{P_B Z}`, chi-square with `K - p` degrees of freedom:
    /// removes the directions spent on estimating the `p` null parameters.
    DofCorrected,
}

/// Support of the sieve bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportRule {
    /// `[0, 1]` in every coordinate.
    Unit,
    /// Sample range of each coordinate.
    Sample,
}

/// Tuning of the sieve test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub psi_family: BasisFamily,
    pub b_family: BasisFamily,
    /// `c` in `K = c J`.
    pub k_factor: usize,
    pub grid: GridMode,
    pub support: SupportRule,
    #[serde(default)]
    pub quantile_knots: bool,
    #[serde(default)]
    pub image_variant: ImageVariant,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            psi_family: BasisFamily::BSpline { order: 3 },
            b_family: BasisFamily::BSpline { order: 3 },
            k_factor: 4,
            grid: GridMode::Dyadic,
            support: SupportRule::Sample,
            quantile_knots: false,
            image_variant: ImageVariant::Plain,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_factor == 0 {
            return Err(NpivError::input("k_factor must be at least 1"));
        }
        if let GridMode::Explicit(list) = &self.grid {
            if list.is_empty() {
                return Err(NpivError::input("explicit grid is empty"));
            }
        }
        Ok(())
    }
}

/// Sieves for `X` and `W` resolved against a sample.
#[derive(Debug, Clone)]
pub struct Sieves {
    pub psi: SieveSpec,
    pub b: SieveSpec,
    pub k_factor: usize,
}

fn supports(cols: &[Vec<f64>], rule: SupportRule) -> Vec<(f64, f64)> {
    cols.iter()
        .map(|c| match rule {
            SupportRule::Unit => (0.0, 1.0),
            SupportRule::Sample => {
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo {
                    (lo, hi)
                } else {
                    (lo - 0.5, lo + 0.5)
                }
            }
        })
        .collect()
}

impl Sieves {
    pub fn new(data: &NpivData, config: &TestConfig) -> Self {
        let psi = SieveSpec {
            family: config.psi_family,
            supports: supports(&data.x, config.support),
            quantile_knots: config.quantile_knots,
        };
        let b = SieveSpec {
            family: config.b_family,
            supports: supports(&data.w, config.support),
            quantile_knots: config.quantile_knots,
        };
        Self {
            psi,
            b,
            k_factor: config.k_factor,
        }
    }

    pub fn psi_design(&self, j: usize, data: &NpivData) -> Result<Matrix> {
        self.psi.design(j, &data.x)
    }

    /// Instrument design for sieve dimension `j`, at least `k_factor * j` columns.
    pub fn b_design(&self, j: usize, data: &NpivData) -> Result<Matrix> {
        self.b.design(self.k_factor * j, &data.w)
    }
}
