//! Probability kernels and reproducible random streams.
//!
//! The chi-square quantile drives every critical value in the test, so it is
//! computed by safeguarded Newton iteration on the regularized incomplete
//! gamma function rather than by a closed-form approximation.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NpivError, Result};
use crate::linalg::{cholesky, DenseMatrix};

/// Generator handed out by [`RngStream`].
pub type StreamRng = ChaCha20Rng;

/// Identifies one reproducible random stream.
///
/// The generator is ChaCha20 keyed by `master_seed` with the 64-bit stream
/// selector set to `stream_id`; draws advance the block counter. Stream `r`
/// of an experiment can therefore be regenerated in isolation on any worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A stream in a disjoint seed domain, e.g. for calibration runs that must
    /// not share draws with the main replications.
    pub fn derived(&self, domain: u64) -> Self {
        Self {
            master_seed: splitmix64(self.master_seed ^ splitmix64(domain)),
            stream_id: self.stream_id,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`std_normal_cdf`].
///
/// Acklam's rational approximation followed by two Halley corrections.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NpivError::input(format!(
            "normal quantile requires 0 < p < 1, got {p}"
        )));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    for _ in 0..2 {
        // Residual in whichever tail keeps relative precision.
        let e = if x <= 0.0 {
            std_normal_cdf(x) - p
        } else {
            (1.0 - p) - 0.5 * libm::erfc(x * FRAC_1_SQRT_2)
        };
        let u = e / std_normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_cont_frac(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn log_gamma_prefactor(a: f64, x: f64) -> f64 {
    a * x.ln() - x - libm::lgamma(a)
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..10_000 {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * log_gamma_prefactor(a, x).exp()
}

/// Lentz evaluation of the continued fraction for `Q(a, x)`.
fn gamma_cont_frac(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    log_gamma_prefactor(a, x).exp() * h
}

pub fn chisq_cdf(x: f64, k: usize) -> f64 {
    gamma_p(k as f64 / 2.0, x / 2.0)
}

/// Upper-tail probability `P(chi2_k > x)`.
pub fn chisq_sf(x: f64, k: usize) -> f64 {
    gamma_q(k as f64 / 2.0, x / 2.0)
}

fn chisq_log_pdf(x: f64, k: usize) -> f64 {
    let h = k as f64 / 2.0;
    (h - 1.0) * x.ln() - x / 2.0 - h * LN_2 - libm::lgamma(h)
}

/// `q(a, k)`: the `100(1 - a)%` quantile of the chi-square distribution with `k`
/// degrees of freedom, i.e. the point with upper-tail probability `a`.
pub fn chisq_quantile(a: f64, k: usize) -> Result<f64> {
    if !(a > 0.0 && a < 1.0) {
        return Err(NpivError::input(format!(
            "chi-square quantile requires 0 < a < 1, got {a}"
        )));
    }
    if k == 0 {
        return Err(NpivError::input("chi-square quantile requires k >= 1"));
    }
    let kf = k as f64;
    // Work in whichever tail is smaller for relative accuracy.
    let use_upper = a < 0.5;
    let residual = |x: f64| {
        if use_upper {
            chisq_sf(x, k) - a
        } else {
            chisq_cdf(x, k) - (1.0 - a)
        }
    };

    // Wilson-Hilferty start.
    let z = std_normal_quantile(1.0 - a)?;
    let v = 2.0 / (9.0 * kf);
    let mut x = kf * (1.0 - v + z * v.sqrt()).powi(3);
    if !(x > 0.0) || !x.is_finite() {
        x = kf.max(1e-3);
    }

    // Bracket: residual is decreasing in x for the upper tail, increasing for the lower.
    let sign = if use_upper { -1.0 } else { 1.0 };
    let mut lo = 0.0;
    let mut hi = x.max(1.0);
    while sign * residual(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(NpivError::numerical("chi-square quantile bracket overflow"));
        }
    }
    if x <= lo || x >= hi {
        x = 0.5 * (lo + hi);
    }

    for _ in 0..200 {
        let r = residual(x);
        if r == 0.0 {
            return Ok(x);
        }
        if sign * r < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = sign * chisq_log_pdf(x, k).exp();
        let mut next = x - r / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.max(1e-300) || (hi - lo) <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Covariance matrix of a multivariate normal law, validated on construction.
#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    matrix: DenseMatrix<f64>,
    chol: DenseMatrix<f64>,
}

impl CovarianceSpec {
    pub fn new(matrix: DenseMatrix<f64>) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(NpivError::input("covariance matrix must be square"));
        }
        if matrix.max_asymmetry() > 1e-12 * (1.0 + matrix.max_abs()) {
            return Err(NpivError::input("covariance matrix must be symmetric"));
        }
        let chol = cholesky(&matrix)
            .map_err(|e| NpivError::input(format!("covariance is not positive definite: {e}")))?;
        Ok(Self { matrix, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix<f64> {
        &self.matrix
    }

    pub fn is_correlation(&self) -> bool {
        self.matrix.diag().iter().all(|d| (d - 1.0).abs() < 1e-12)
    }

    /// One draw using an externally owned generator.
    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z: Vec<f64> = (0..self.dim()).map(|_| StandardNormal.sample(rng)).collect();
        self.chol.mat_vec(&z)
    }
}

/// `n` draws from `N(0, cov)` on the given stream.
pub fn mvn_sample(cov: &CovarianceSpec, stream: RngStream, n: usize) -> Vec<Vec<f64>> {
    let mut rng = stream.rng();
    (0..n).map(|_| cov.draw(&mut rng)).collect()
}
