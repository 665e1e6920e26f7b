//! Simulation designs.
//!
//! * Design I: `(X*, W*, U)` jointly normal with `corr(X*, W*) = xi`,
//!   `corr(X*, U) = 0.3`; `X = Phi(X*)`, `W = Phi(W*)`, `Y = h(X) + U`.
//! * Design II: `X = Phi(xi W* + sqrt(1 - xi^2) eps)`,
//!   `U = (0.3 eps + sqrt(0.91) nu) / 2`.
//! * Multivariate: two instruments, the second correlated 0.4 with `X*`.

use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NpivError, Result};
use crate::randdist::{mvn_sample, std_normal_cdf, CovarianceSpec, RngStream};
use crate::stat::NpivData;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    I,
    II,
    Multivariate,
}

/// Structural function families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HSpec {
    /// `c0 [1 - 2 Phi((x - 1/2) / c0)]`.
    Mono { c0: f64 },
    /// `-x/5 + cA (x^2 + cB sin(2 pi x))`.
    Sin { ca: f64, cb: f64 },
    /// `x/5 + x^2 + cA sin(2 pi x)`.
    Design2 { ca: f64 },
    /// `-x/5 + cA x^2`.
    Quad { ca: f64 },
}

pub fn h_mono(c0: f64, x: f64) -> Result<f64> {
    if !(c0 > 0.0) {
        return Err(NpivError::input(format!("c0 must be positive, got {c0}")));
    }
    Ok(c0 * (1.0 - 2.0 * std_normal_cdf((x - 0.5) / c0)))
}

pub fn h_sin(ca: f64, cb: f64, x: f64) -> f64 {
    -x / 5.0 + ca * (x * x + cb * (2.0 * PI * x).sin())
}

pub fn h_design2(ca: f64, x: f64) -> f64 {
    x / 5.0 + x * x + ca * (2.0 * PI * x).sin()
}

pub fn h_quad(ca: f64, x: f64) -> f64 {
    -x / 5.0 + ca * x * x
}

impl std::fmt::Display for HSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            HSpec::Mono { c0 } => write!(f, "mono(c0={c0})"),
            HSpec::Sin { ca, cb } => write!(f, "sin(ca={ca},cb={cb})"),
            HSpec::Design2 { ca } => write!(f, "design2(ca={ca})"),
            HSpec::Quad { ca } => write!(f, "quad(ca={ca})"),
        }
    }
}

impl HSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            HSpec::Mono { c0 } => c0 > 0.0 && c0.is_finite(),
            HSpec::Sin { ca, cb } => ca.is_finite() && cb.is_finite(),
            HSpec::Design2 { ca } | HSpec::Quad { ca } => ca.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(NpivError::input(format!("invalid structural function {self:?}")))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            HSpec::Mono { c0 } => h_mono(c0, x).unwrap_or(f64::NAN),
            HSpec::Sin { ca, cb } => h_sin(ca, cb, x),
            HSpec::Design2 { ca } => h_design2(ca, x),
            HSpec::Quad { ca } => h_quad(ca, x),
        }
    }

    /// First derivative.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            HSpec::Mono { c0 } => {
                -2.0 * crate::randdist::std_normal_pdf((x - 0.5) / c0)
            }
            HSpec::Sin { ca, cb } => -0.2 + ca * (2.0 * x + cb * 2.0 * PI * (2.0 * PI * x).cos()),
            HSpec::Design2 { ca } => 0.2 + 2.0 * x + ca * 2.0 * PI * (2.0 * PI * x).cos(),
            HSpec::Quad { ca } => -0.2 + 2.0 * ca * x,
        }
    }

    /// The perturbation amplitude `cA` where it exists.
    pub fn amplitude(&self) -> Option<f64> {
        match *self {
            HSpec::Mono { .. } => None,
            HSpec::Sin { ca, .. } | HSpec::Design2 { ca } | HSpec::Quad { ca } => Some(ca),
        }
    }

    pub fn with_amplitude(&self, ca: f64) -> Self {
        match *self {
            HSpec::Mono { c0 } => HSpec::Mono { c0 },
            HSpec::Sin { cb, .. } => HSpec::Sin { ca, cb },
            HSpec::Design2 { .. } => HSpec::Design2 { ca },
            HSpec::Quad { .. } => HSpec::Quad { ca },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub design: Design,
    pub n: usize,
    pub xi: f64,
    pub h: HSpec,
    pub rng: RngStream,
}

/// A generated sample together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub data: NpivData,
    pub config: DesignConfig,
}

pub fn design1_covariance(xi: f64) -> Result<CovarianceSpec> {
    CovarianceSpec::new(Matrix::from_rows(&[
        vec![1.0, xi, 0.3],
        vec![xi, 1.0, 0.0],
        vec![0.3, 0.0, 1.0],
    ])?)
}

pub fn multivariate_covariance(xi: f64) -> Result<CovarianceSpec> {
    CovarianceSpec::new(Matrix::from_rows(&[
        vec![1.0, xi, 0.4, 0.3],
        vec![xi, 1.0, 0.0, 0.0],
        vec![0.4, 0.0, 1.0, 0.0],
        vec![0.3, 0.0, 0.0, 1.0],
    ])?)
}

fn check(cfg: &DesignConfig, design: Design) -> Result<()> {
    if cfg.design != design {
        return Err(NpivError::input(format!(
            "configuration is for design {:?}, not {design:?}",
            cfg.design
        )));
    }
    if cfg.n == 0 {
        return Err(NpivError::input("sample size must be positive"));
    }
    if !(cfg.xi > 0.0 && cfg.xi < 1.0) {
        return Err(NpivError::input(format!("xi must lie in (0, 1), got {}", cfg.xi)));
    }
    cfg.h.validate()
}

pub fn gen_design1(cfg: &DesignConfig) -> Result<Dataset> {
    check(cfg, Design::I)?;
    let draws = mvn_sample(&design1_covariance(cfg.xi)?, cfg.rng, cfg.n);
    let x: Vec<f64> = draws.iter().map(|d| std_normal_cdf(d[0])).collect();
    let w: Vec<f64> = draws.iter().map(|d| std_normal_cdf(d[1])).collect();
    let y = x.iter().zip(&draws).map(|(&x, d)| cfg.h.eval(x) + d[2]).collect();
    Ok(Dataset {
        data: NpivData::univariate(y, x, w),
        config: cfg.clone(),
    })
}

pub fn gen_design2(cfg: &DesignConfig) -> Result<Dataset> {
    check(cfg, Design::II)?;
    let mut rng = cfg.rng.rng();
    let s = (1.0 - cfg.xi * cfg.xi).sqrt();
    let su = (1.0f64 - 0.09).sqrt();
    let (mut y, mut x, mut w) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.n {
        let ws: f64 = StandardNormal.sample(&mut rng);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let nu: f64 = StandardNormal.sample(&mut rng);
        let xv = std_normal_cdf(cfg.xi * ws + s * eps);
        let u = (0.3 * eps + su * nu) / 2.0;
        x.push(xv);
        w.push(std_normal_cdf(ws));
        y.push(cfg.h.eval(xv) + u);
    }
    Ok(Dataset {
        data: NpivData::univariate(y, x, w),
        config: cfg.clone(),
    })
}

pub fn gen_multivariate(cfg: &DesignConfig) -> Result<Dataset> {
    check(cfg, Design::Multivariate)?;
    let draws = mvn_sample(&multivariate_covariance(cfg.xi)?, cfg.rng, cfg.n);
    let x: Vec<f64> = draws.iter().map(|d| std_normal_cdf(d[0])).collect();
    let w1 = draws.iter().map(|d| std_normal_cdf(d[1])).collect();
    let w2 = draws.iter().map(|d| std_normal_cdf(d[2])).collect();
    let y = x.iter().zip(&draws).map(|(&x, d)| cfg.h.eval(x) + d[3]).collect();
    Ok(Dataset {
        data: NpivData {
            y,
            x: vec![x],
            w: vec![w1, w2],
            mu: None,
        },
        config: cfg.clone(),
    })
}

pub fn generate(cfg: &DesignConfig) -> Result<Dataset> {
    match cfg.design {
        Design::I => gen_design1(cfg),
        Design::II => gen_design2(cfg),
        Design::Multivariate => gen_multivariate(cfg),
    }
}
