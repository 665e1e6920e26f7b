use serde::{Deserialize, Serialize};

use super::statistic::compute_shat;
use super::{GridMode, NpivData, Sieves};
use crate::basis::zeta_for;
use crate::error::{NpivError, Result};

/// Candidate sieve dimensions for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    pub mode: GridMode,
    /// `J_ = max(1, floor(sqrt(ln ln n)))`.
    pub j_lower: usize,
    pub j_max_exponent: u32,
    /// Largest dimension the scan may reach.
    pub hard_cap: usize,
    pub j_list: Vec<usize>,
    /// Empirical upper bound on the dimension.
    pub j_max_hat: usize,
    /// `(J, s_hat_J)` for every dimension visited.
    pub shat: Vec<(usize, f64)>,
    /// The capped list was empty and the basis minimum was used instead.
    pub fallback: bool,
}

impl CandidateGrid {
    pub fn len(&self) -> usize {
        self.j_list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.j_list.is_empty()
    }

    pub fn shat_at(&self, j: usize) -> Option<f64> {
        self.shat.iter().find(|(k, _)| *k == j).map(|(_, s)| *s)
    }
}

pub fn j_lower(n: usize) -> usize {
    let v = (n as f64).ln().ln();
    if v.is_finite() && v > 0.0 {
        (v.sqrt().floor() as usize).max(1)
    } else {
        1
    }
}

pub fn j_max_exponent(n: usize, j_lower: usize) -> u32 {
    let v = ((n as f64).cbrt() / j_lower as f64).log2().ceil();
    if v > 0.0 {
        v as u32
    } else {
        0
    }
}

/// `{J_ 2^j : j = 0..j_max}` before lifting or capping.
pub fn raw_dyadic(n: usize) -> Vec<usize> {
    let jl = j_lower(n);
    (0..=j_max_exponent(n, jl)).map(|j| jl << j).collect()
}

/// Random exponential scan over sieve dimensions.
pub fn build_grid(data: &NpivData, sieves: &Sieves, mode: &GridMode) -> Result<CandidateGrid> {
    let n = data.n();
    let min_dim = sieves.psi.min_dim();
    let jl = j_lower(n);
    let jmax = j_max_exponent(n, jl);
    let (raw, hard_cap) = match mode {
        GridMode::Dyadic | GridMode::Explicit(_) => {
            let raw: Vec<usize> = (0..=jmax).map(|j| (jl << j).max(min_dim)).collect();
            (raw, (jl << jmax).max(min_dim))
        }
        GridMode::Knots => {
            let mut raw = vec![min_dim];
            raw.extend((0..=jmax).map(|j| min_dim + (jl << j)));
            (raw, min_dim + (jl << jmax))
        }
    };
    let weights = data.mu.as_deref();
    let mut shat = Vec::new();
    let mut j_max_hat = None;
    let mut last_ok = min_dim;
    let mut truncated = false;
    for j in (jl + 1).max(min_dim)..=hard_cap {
        if sieves.k_factor * j >= n {
            truncated = true;
            break;
        }
        let psi = sieves.psi_design(j, data)?;
        let b = sieves.b_design(j, data)?;
        if b.cols() >= n {
            truncated = true;
            break;
        }
        let s = match compute_shat(&psi, &b, weights) {
            Ok(s) => s,
            Err(NpivError::Numerical(msg)) => {
                log::warn!("s_hat at J = {j}: {msg}; stopping the scan");
                0.0
            }
            Err(e) => return Err(e.at_dimension(j)),
        };
        shat.push((j, s));
        last_ok = j;
        let zeta = zeta_for(sieves.psi.family, j);
        if 1.5 * zeta * zeta * ((j as f64).ln() / n as f64).sqrt() >= s {
            j_max_hat = Some(j);
            break;
        }
    }
    let j_max_hat = j_max_hat.unwrap_or(if truncated { last_ok } else { hard_cap });

    let mut fallback = false;
    let j_list = match mode {
        GridMode::Explicit(list) => {
            let mut list = list.clone();
            list.sort_unstable();
            list.dedup();
            for &j in &list {
                if j < min_dim {
                    return Err(NpivError::input(format!(
                        "grid dimension {j} is below the basis minimum {min_dim}"
                    )));
                }
                if sieves.k_factor * j >= n {
                    return Err(NpivError::input(format!(
                        "grid dimension {j} needs K = {} instruments but n = {n}",
                        sieves.k_factor * j
                    )));
                }
            }
            list
        }
        _ => {
            let mut list: Vec<usize> = raw.into_iter().filter(|&j| j <= j_max_hat).collect();
            list.sort_unstable();
            list.dedup();
            if list.is_empty() {
                log::warn!(
                    "empirical dimension bound {j_max_hat} is below every candidate; using J = {min_dim}"
                );
                fallback = true;
                list.push(min_dim);
            }
            list
        }
    };
    for &j in &j_list {
        if !shat.iter().any(|(k, _)| *k == j) {
            let psi = sieves.psi_design(j, data)?;
            let b = sieves.b_design(j, data)?;
            let s = compute_shat(&psi, &b, weights).unwrap_or(0.0);
            shat.push((j, s));
        }
    }
    shat.sort_by_key(|(j, _)| *j);
    Ok(CandidateGrid {
        mode: mode.clone(),
        j_lower: jl,
        j_max_exponent: jmax,
        hard_cap,
        j_list,
        j_max_hat,
        shat,
        fallback,
    })
}
