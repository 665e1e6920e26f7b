//! Adaptive sieve tests for equality and shape restrictions on the structural
//! function of a nonparametric instrumental-variables model
//! `E[Y - h(X) | W] = 0`.
//!
//! The crate is layered bottom-up:
//!
//! * [`linalg`]: dense kernels (SVD, pseudo-inverses, symmetric square roots),
//!   generic over the [`Real`] scalar.
//! * [`randdist`]: normal and chi-square kernels, reproducible RNG streams.
//! * [`basis`]: B-spline, cosine and power sieves plus derivative constraints.
//! * [`npiv`]: unrestricted sieve 2SLS and restricted fits (cone projection or
//!   parametric 2SLS).
//! * [`stat`]: the leave-one-out statistic, its normalizer, the random
//!   exponential scan over sieve dimensions, the adaptive decision, confidence
//!   set membership and the image-space variant.
//! * [`dgp`] and [`sim`]: simulation designs and the Monte Carlo driver.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod basis;
pub mod dgp;
pub mod error;
pub mod linalg;
pub mod npiv;
pub mod randdist;
pub mod scalar;
pub mod sim;
pub mod stat;

pub use error::{NpivError, Result};
pub use scalar::Real;

/// Double-precision dense matrix used throughout the estimators.
pub type Matrix = linalg::DenseMatrix<f64>;
/// Single-precision dense matrix.
pub type Matrix32 = linalg::DenseMatrix<f32>;
pub type Svd = linalg::SvdResult<f64>;
pub type ConeProjection = npiv::ConeSolution<f64>;
