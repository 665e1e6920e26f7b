//! Sieve bases: B-splines, cosine and power series, their tensor products,
//! and derivative constraint matrices for shape restrictions.
//!
//! Sieve dimension `J` always counts basis functions. A B-spline of order `m`
//! (degree `m - 1`) with `J` functions has `J - m` interior knots.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{NpivError, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum BasisFamily {
    /// B-splines of the given order (order 3 = quadratic).
    BSpline { order: usize },
    /// `{1, sqrt(2) cos(pi j u)}` on the support mapped to `[0, 1]`.
    Cosine,
    /// Monomials `u^j` on the support mapped to `[0, 1]`.
    Power,
}

impl BasisFamily {
    pub fn min_dim(&self) -> usize {
        match self {
            BasisFamily::BSpline { order } => *order,
            BasisFamily::Cosine | BasisFamily::Power => 1,
        }
    }
}

/// Placement of interior B-spline knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    Equispaced,
    /// Empirical quantiles of the (sorted) sample.
    Quantile(Arc<[f64]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub knot_rule: KnotRule,
}

impl BasisSpec {
    pub fn new(family: BasisFamily, dim: usize) -> Self {
        Self {
            family,
            dim,
            lo: 0.0,
            hi: 1.0,
            knot_rule: KnotRule::Equispaced,
        }
    }

    pub fn bspline(order: usize, dim: usize) -> Self {
        Self::new(BasisFamily::BSpline { order }, dim)
    }

    pub fn cosine(dim: usize) -> Self {
        Self::new(BasisFamily::Cosine, dim)
    }

    pub fn power(dim: usize) -> Self {
        Self::new(BasisFamily::Power, dim)
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    /// Place interior knots at empirical quantiles of `sample`.
    pub fn with_quantile_knots(mut self, sample: &[f64]) -> Self {
        let mut s: Vec<f64> = sample.iter().copied().filter(|v| v.is_finite()).collect();
        s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        self.knot_rule = KnotRule::Quantile(s.into());
        self
    }

    /// Same family, support and knot rule at a different dimension.
    pub fn with_dim(&self, dim: usize) -> Self {
        Self {
            dim,
            ..self.clone()
        }
    }

    pub fn min_dim(&self) -> usize {
        self.family.min_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(NpivError::input(format!(
                "basis support [{}, {}] is not a proper interval",
                self.lo, self.hi
            )));
        }
        if self.dim < self.min_dim() {
            return Err(NpivError::input(format!(
                "basis dimension {} is below the family minimum {} for {:?}",
                self.dim,
                self.min_dim(),
                self.family
            )));
        }
        if let BasisFamily::BSpline { order } = self.family {
            if order < 1 {
                return Err(NpivError::input("B-spline order must be at least 1"));
            }
            self.interior_knots()?;
        }
        Ok(())
    }

    /// Interior knots of a B-spline basis, strictly increasing inside `(lo, hi)`.
    pub fn interior_knots(&self) -> Result<Vec<f64>> {
        let order = match self.family {
            BasisFamily::BSpline { order } => order,
            _ => return Ok(Vec::new()),
        };
        let count = self.dim.saturating_sub(order);
        let knots: Vec<f64> = match &self.knot_rule {
            KnotRule::Equispaced => {
                let step = (self.hi - self.lo) / (count + 1) as f64;
                (1..=count).map(|k| self.lo + step * k as f64).collect()
            }
            KnotRule::Quantile(sample) => {
                if sample.is_empty() {
                    return Err(NpivError::input("quantile knots need a non-empty sample"));
                }
                (1..=count)
                    .map(|k| empirical_quantile(sample, k as f64 / (count + 1) as f64))
                    .collect()
            }
        };
        let ok = knots.iter().all(|&k| k > self.lo && k < self.hi)
            && knots.windows(2).all(|w| w[0] < w[1]);
        if !ok {
            return Err(NpivError::input(format!(
                "interior knots are not strictly increasing inside ({}, {}): {:?}",
                self.lo, self.hi, knots
            )));
        }
        Ok(knots)
    }

    /// Full knot vector with each boundary knot repeated `order` times.
    pub fn knot_vector(&self) -> Result<Vec<f64>> {
        let order = match self.family {
            BasisFamily::BSpline { order } => order,
            _ => return Err(NpivError::input("knot vector requested for a non-spline basis")),
        };
        let interior = self.interior_knots()?;
        let mut t = vec![self.lo; order];
        t.extend(interior);
        t.extend(std::iter::repeat_n(self.hi, order));
        Ok(t)
    }

    fn unit(&self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }
}

fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clamp points into `[lo, hi]`, warning when any had to move.
fn clamp_points<T: Real>(spec: &BasisSpec, x: &[T]) -> Result<Vec<f64>> {
    let mut moved = 0usize;
    let mut out = Vec::with_capacity(x.len());
    for &v in x {
        let v = v.as_f64();
        if !v.is_finite() {
            return Err(NpivError::input("basis evaluation at a non-finite point"));
        }
        let c = v.clamp(spec.lo, spec.hi);
        if c != v {
            moved += 1;
        }
        out.push(c);
    }
    if moved > 0 {
        log::warn!(
            "{moved} point(s) outside the basis support [{}, {}] were clamped",
            spec.lo,
            spec.hi
        );
    }
    Ok(out)
}

/// Index `s` with `t[s] <= x < t[s + 1]` restricted to the non-degenerate spans.
fn find_span(t: &[f64], order: usize, dim: usize, x: f64) -> usize {
    let last = dim - 1;
    if x >= t[dim] {
        return last;
    }
    let (mut lo, mut hi) = (order - 1, dim);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x < t[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Nonzero B-spline values at `x`: entries `span - order + 1 ..= span`.
fn nonzero_bsplines(t: &[f64], order: usize, span: usize, x: f64) -> Vec<f64> {
    let mut n = vec![0.0; order];
    let mut left = vec![0.0; order];
    let mut right = vec![0.0; order];
    n[0] = 1.0;
    for j in 1..order {
        left[j] = x - t[span + 1 - j];
        right[j] = t[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let denom = right[r + 1] + left[j - r];
            let temp = if denom != 0.0 { n[r] / denom } else { 0.0 };
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

fn bspline_rows(t: &[f64], order: usize, dim: usize, xs: &[f64]) -> Matrix {
    let mut out = Matrix::zeros(xs.len(), dim);
    for (i, &x) in xs.iter().enumerate() {
        let span = find_span(t, order, dim, x);
        let vals = nonzero_bsplines(t, order, span, x);
        let row = out.row_mut(i);
        for (k, v) in vals.into_iter().enumerate() {
            row[span + 1 - order + k] = v;
        }
    }
    out
}

/// `n x J` design matrix with row `i` equal to `(psi_1(x_i), ..., psi_J(x_i))`.
pub fn eval_design<T: Real>(spec: &BasisSpec, x: &[T]) -> Result<DenseMatrix<T>> {
    spec.validate()?;
    let xs = clamp_points(spec, x)?;
    let j = spec.dim;
    let m = match spec.family {
        BasisFamily::BSpline { order } => bspline_rows(&spec.knot_vector()?, order, j, &xs),
        BasisFamily::Cosine => Matrix::from_fn(xs.len(), j, |i, k| {
            if k == 0 {
                1.0
            } else {
                2f64.sqrt() * (std::f64::consts::PI * k as f64 * spec.unit(xs[i])).cos()
            }
        }),
        BasisFamily::Power => {
            Matrix::from_fn(xs.len(), j, |i, k| spec.unit(xs[i]).powi(k as i32))
        }
    };
    Ok(m.cast())
}

/// Derivative-coefficient operator: maps coefficients of an order-`order`
/// spline on knots `t` to those of its derivative (order `order - 1`, knots `t[1..len-1]`).
fn derivative_operator(t: &[f64], order: usize, dim: usize) -> Matrix {
    let mut d = Matrix::zeros(dim - 1, dim);
    let k = (order - 1) as f64;
    for j in 0..dim - 1 {
        let h = t[j + order] - t[j + 1];
        if h > 0.0 {
            d[(j, j)] = -k / h;
            d[(j, j + 1)] = k / h;
        }
    }
    d
}

/// Matrix `D_k` mapping spline coefficients to the B-spline coefficients of the
/// `k`-th derivative, together with the derivative's knots.
fn spline_derivative_map(spec: &BasisSpec, k: usize) -> Result<(Matrix, Vec<f64>, usize)> {
    let order = match spec.family {
        BasisFamily::BSpline { order } => order,
        _ => return Err(NpivError::input("spline derivative map needs a B-spline basis")),
    };
    if k >= order {
        return Err(NpivError::input(format!(
            "derivative order {k} vanishes for B-splines of order {order}"
        )));
    }
    let mut t = spec.knot_vector()?;
    let mut map = Matrix::identity(spec.dim);
    let mut cur_order = order;
    let mut cur_dim = spec.dim;
    for _ in 0..k {
        let d = derivative_operator(&t, cur_order, cur_dim);
        map = d.matmul(&map);
        t = t[1..t.len() - 1].to_vec();
        cur_order -= 1;
        cur_dim -= 1;
    }
    Ok((map, t, cur_order))
}

/// `n x J` matrix of `k`-th derivatives of the basis functions.
pub fn eval_derivative_design(spec: &BasisSpec, k: usize, x: &[f64]) -> Result<Matrix> {
    spec.validate()?;
    if k == 0 {
        return eval_design(spec, x);
    }
    let xs = clamp_points(spec, x)?;
    let j = spec.dim;
    let width = spec.hi - spec.lo;
    match spec.family {
        BasisFamily::BSpline { .. } => {
            let (map, t, order) = spline_derivative_map(spec, k)?;
            let lower = bspline_rows(&t, order, j - k, &xs);
            Ok(lower.matmul(&map))
        }
        BasisFamily::Cosine => Ok(Matrix::from_fn(xs.len(), j, |i, c| {
            if c == 0 {
                return 0.0;
            }
            let w = std::f64::consts::PI * c as f64 / width;
            let phase = std::f64::consts::PI * c as f64 * spec.unit(xs[i]);
            // d^k/dx^k cos(w x) = w^k cos(w x + k pi / 2)
            2f64.sqrt() * w.powi(k as i32) * (phase + k as f64 * std::f64::consts::FRAC_PI_2).cos()
        })),
        BasisFamily::Power => Ok(Matrix::from_fn(xs.len(), j, |i, c| {
            if c < k {
                return 0.0;
            }
            let falling: f64 = (0..k).map(|r| (c - r) as f64).product();
            falling * spec.unit(xs[i]).powi((c - k) as i32) / width.powi(k as i32)
        })),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    MonotoneDecreasing,
    MonotoneIncreasing,
    Convex,
    Concave,
    Custom,
}

/// Linear functionals `M` defining the null cone `{beta : M beta <= 0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    pub rows: Matrix,
    pub kind: ConstraintKind,
}

impl ConstraintMatrix {
    /// User-supplied rows.
    pub fn custom(rows: Matrix) -> Self {
        Self {
            rows,
            kind: ConstraintKind::Custom,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.rows.cols()
    }

    /// `M beta`.
    pub fn apply(&self, beta: &[f64]) -> Vec<f64> {
        self.rows.mat_vec(beta)
    }
}

/// Constraint rows whose non-positivity encodes the requested shape.
///
/// Rows are the B-spline coefficients of the first (monotone) or second
/// (convex/concave) derivative. For quadratic splines the first derivative is
/// piecewise linear, so non-positive coefficients are equivalent to the
/// derivative being non-positive at every derivative knot and hence on the
/// whole support; the second derivative is piecewise constant with one row
/// per knot interval.
pub fn deriv_constraints(spec: &BasisSpec, kind: ConstraintKind) -> Result<ConstraintMatrix> {
    spec.validate()?;
    let order = match spec.family {
        BasisFamily::BSpline { order } => order,
        fam => {
            return Err(NpivError::input(format!(
                "shape constraints are only available for B-spline bases, not {fam:?}"
            )))
        }
    };
    let (deriv, sign) = match kind {
        ConstraintKind::MonotoneDecreasing => (1, 1.0),
        ConstraintKind::MonotoneIncreasing => (1, -1.0),
        ConstraintKind::Concave => (2, 1.0),
        ConstraintKind::Convex => (2, -1.0),
        ConstraintKind::Custom => {
            return Err(NpivError::input(
                "custom constraints are supplied directly, not derived from the basis",
            ))
        }
    };
    let min_order = deriv + 1;
    if order < min_order {
        return Err(NpivError::input(format!(
            "{kind:?} constraints need B-splines of order >= {min_order}, got {order}"
        )));
    }
    let (map, _, _) = spline_derivative_map(spec, deriv)?;
    Ok(ConstraintMatrix {
        rows: map.scale(sign),
        kind,
    })
}

/// Tensor-product design: one column per product of one basis function from
/// each coordinate, last coordinate varying fastest.
pub fn tensor_design<T: Real>(specs: &[BasisSpec], x: &[Vec<T>]) -> Result<DenseMatrix<T>> {
    if specs.is_empty() {
        return Err(NpivError::input("tensor design needs at least one coordinate"));
    }
    if specs.len() != x.len() {
        return Err(NpivError::input(format!(
            "tensor design: {} basis specs for {} coordinates",
            specs.len(),
            x.len()
        )));
    }
    let n = x[0].len();
    if x.iter().any(|c| c.len() != n) {
        return Err(NpivError::input("tensor design: coordinates have different lengths"));
    }
    let mut acc = eval_design(&specs[0], &x[0])?;
    for (spec, col) in specs.iter().zip(x).skip(1) {
        let next = eval_design(spec, col)?;
        let (a, b) = (acc.cols(), next.cols());
        acc = DenseMatrix::from_fn(n, a * b, |i, c| acc[(i, c / b)] * next[(i, c % b)]);
    }
    Ok(acc)
}

/// Growth constant `zeta_J`: `sqrt(J)` for spline and trigonometric sieves,
/// `J` for power series.
pub fn zeta(spec: &BasisSpec) -> f64 {
    zeta_for(spec.family, spec.dim)
}

pub fn zeta_for(family: BasisFamily, dim: usize) -> f64 {
    match family {
        BasisFamily::BSpline { .. } | BasisFamily::Cosine => (dim as f64).sqrt(),
        BasisFamily::Power => dim as f64,
    }
}

/// Sieve over one or more coordinates; a single coordinate is the ordinary basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SieveSpec {
    pub family: BasisFamily,
    /// Per-coordinate supports.
    pub supports: Vec<(f64, f64)>,
    pub quantile_knots: bool,
}

impl SieveSpec {
    pub fn new(family: BasisFamily, coords: usize) -> Self {
        Self {
            family,
            supports: vec![(0.0, 1.0); coords],
            quantile_knots: false,
        }
    }

    pub fn coords(&self) -> usize {
        self.supports.len()
    }

    pub fn min_dim(&self) -> usize {
        self.family.min_dim().pow(self.coords() as u32)
    }

    /// Per-coordinate dimensions for a total dimension of at least `total`:
    /// the smallest equal per-coordinate dimension whose product reaches it.
    pub fn per_coord_dim(&self, total: usize) -> usize {
        let d = self.coords() as u32;
        let mut k = self.family.min_dim();
        while k.pow(d) < total {
            k += 1;
        }
        k
    }

    /// Basis specs for each coordinate at (approximately) total dimension `total`.
    pub fn specs(&self, total: usize, data: &[Vec<f64>]) -> Vec<BasisSpec> {
        let per = if self.coords() == 1 {
            total
        } else {
            self.per_coord_dim(total)
        };
        self.supports
            .iter()
            .enumerate()
            .map(|(c, &(lo, hi))| {
                let s = BasisSpec::new(self.family, per).with_support(lo, hi);
                if self.quantile_knots && c < data.len() {
                    s.with_quantile_knots(&data[c])
                } else {
                    s
                }
            })
            .collect()
    }

    pub fn design(&self, total: usize, data: &[Vec<f64>]) -> Result<Matrix> {
        tensor_design(&self.specs(total, data), data)
    }
}
