//! Reference implementations used as oracles. They rebuild every quantity
//! from the raw designs with nalgebra, sharing no code with the library.
#![allow(dead_code, clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};
use npiv_core::basis::{eval_design, BasisSpec};
use npiv_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn sym_pow(m: &DMatrix<f64>, p: f64) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).powf(p)));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Randomly drawn sieve problem with correlated regressor and instrument.
pub struct Instance {
    pub y: Vec<f64>,
    pub resid: Vec<f64>,
    pub psi: Matrix,
    pub b: Matrix,
    pub mu: Option<Vec<f64>>,
}

/// Draws are repeated until `Psi' P_B Psi` has condition number at most
/// 1e5: beyond that, rounding in any implementation exceeds the 1e-10
/// agreement the suites demand.
pub fn random_instance(rng: &mut ChaCha8Rng, max_n: usize) -> Instance {
    loop {
        let inst = draw_instance(rng, max_n);
        let d = dense(&inst.psi, &inst.b, None);
        let sv = (d.psi.transpose() * &d.pb * &d.psi).singular_values();
        if sv.max() <= 1e5 * sv.min() {
            return inst;
        }
    }
}

fn draw_instance(rng: &mut ChaCha8Rng, max_n: usize) -> Instance {
    let n = rng.random_range(30..=max_n);
    let j = rng.random_range(2..=5);
    let k = rng.random_range(j..=(2 * j).min(n / 3));
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let x: Vec<f64> = w
        .iter()
        .map(|w| (0.6 * w + 0.4 * rng.random::<f64>()).clamp(0.0, 1.0))
        .collect();
    let spec_x = BasisSpec::bspline(j.min(3), j);
    let psi = eval_design(&spec_x, &x).unwrap();
    let b = eval_design(&BasisSpec::cosine(k), &w).unwrap();
    let y: Vec<f64> = x.iter().map(|x| x.sin() + 0.5 * rng.random::<f64>()).collect();
    let resid: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.3).collect();
    let mu = rng
        .random_bool(0.5)
        .then(|| (0..n).map(|_| 0.5 + rng.random::<f64>()).collect());
    Instance { y, resid, psi, b, mu }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pieces rebuilt from scratch: `P_B`, `A = (Psi' P_B Psi)^-`, `G`.
pub struct Dense {
    pub psi: DMatrix<f64>,
    pub pb: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

pub fn dense(psi: &Matrix, b: &Matrix, mu: Option<&[f64]>) -> Dense {
    let psi = to_na(psi);
    let b = to_na(b);
    let n = psi.nrows();
    let btb = b.transpose() * &b;
    let pb = &b * btb.pseudo_inverse(1e-12).unwrap() * b.transpose();
    let a = (psi.transpose() * &pb * &psi).pseudo_inverse(1e-12).unwrap();
    let w = DVector::from_fn(n, |i, _| mu.map_or(1.0, |m| m[i]));
    let g = psi.transpose() * DMatrix::from_diagonal(&w) * &psi;
    Dense { psi, pb, a, g }
}

/// Leave-one-out double sum `sum_{i != j} r_i r_j [Q' Omega Q]_{ij} / (n (n - 1))`
/// with `Q = sqrt(n) Psi A Psi' P_B`.
/// Also returns the absolute double sum, a natural scale for the error.
pub fn brute_force_d(inst: &Instance, r: &[f64]) -> (f64, f64) {
    let d = dense(&inst.psi, &inst.b, inst.mu.as_deref());
    let n = r.len();
    let q = (n as f64).sqrt() * &d.psi * &d.a * d.psi.transpose() * &d.pb;
    let w = DVector::from_fn(n, |i, _| inst.mu.as_ref().map_or(1.0, |m| m[i]));
    let m = q.transpose() * DMatrix::from_diagonal(&w) * &q;
    let (mut s, mut abs) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let t = r[i] * r[j] * m[(i, j)];
                s += t;
                abs += t.abs();
            }
        }
    }
    let norm = n as f64 * (n as f64 - 1.0);
    (s / norm, abs / norm)
}

/// `|| G^{1/2} A C' diag(e^2) C A G^{1/2} ||_F` with `C = P_B Psi`.
pub fn dense_vhat(inst: &Instance, e: &[f64]) -> f64 {
    let d = dense(&inst.psi, &inst.b, inst.mu.as_deref());
    let c = &d.pb * &d.psi;
    let e2 = DMatrix::from_diagonal(&DVector::from_iterator(e.len(), e.iter().map(|v| v * v)));
    let gh = sym_pow(&d.g, 0.5);
    (&gh * &d.a * c.transpose() * e2 * &c * &d.a * &gh).norm()
}

/// Smallest singular value of `(B'B)^{-1/2} B' Psi (Psi' Omega Psi)^{-1/2}`.
pub fn dense_shat(inst: &Instance) -> f64 {
    let d = dense(&inst.psi, &inst.b, inst.mu.as_deref());
    let b = to_na(&inst.b);
    let m = sym_pow(&(b.transpose() * &b), -0.5) * b.transpose() * &d.psi * sym_pow(&d.g, -0.5);
    m.singular_values().min()
}

/// Cone projection by enumerating every active set: each candidate solves the
/// equality-constrained KKT system and the feasible one with the smallest
/// objective wins.
pub fn exhaustive_cone(v: &[f64], g: &Matrix, m: &Matrix) -> Vec<f64> {
    let j = v.len();
    let rows = m.rows();
    let g = to_na(g);
    let m = to_na(m);
    let v = DVector::from_column_slice(v);
    let scale = 1.0 + v.norm();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << rows) {
        let s: Vec<usize> = (0..rows).filter(|i| mask & (1 << i) != 0).collect();
        let size = j + s.len();
        let mut kkt = DMatrix::zeros(size, size);
        kkt.view_mut((0, 0), (j, j)).copy_from(&g);
        for (a, &i) in s.iter().enumerate() {
            for c in 0..j {
                kkt[(j + a, c)] = m[(i, c)];
                kkt[(c, j + a)] = m[(i, c)];
            }
        }
        let mut rhs = DVector::zeros(size);
        rhs.rows_mut(0, j).copy_from(&(&g * &v));
        let Some(sol) = kkt.clone().lu().solve(&rhs) else { continue };
        if (&kkt * &sol - &rhs).norm() > 1e-9 * scale {
            continue;
        }
        let beta = sol.rows(0, j).into_owned();
        if (&m * &beta).iter().any(|&x| x > 1e-11 * scale) {
            continue;
        }
        let diff = &v - &beta;
        let obj = (diff.transpose() * &g * &diff)[(0, 0)];
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, beta));
        }
    }
    best.expect("the origin is always feasible").1.iter().copied().collect()
}

/// Dykstra's alternating projections onto the halfspaces `m_i' beta <= 0`
/// in the `G` inner product.
pub fn dykstra_cone(v: &[f64], g: &Matrix, m: &Matrix, sweeps: usize) -> Vec<f64> {
    let g = to_na(g);
    let ginv = g.clone().try_inverse().unwrap();
    let m = to_na(m);
    let rows = m.nrows();
    let mut x = DVector::from_column_slice(v);
    let mut incr: Vec<DVector<f64>> = vec![DVector::zeros(v.len()); rows];
    for _ in 0..sweeps {
        for i in 0..rows {
            let y = &x + &incr[i];
            let mi = m.row(i).transpose();
            let dir = &ginv * &mi;
            let viol = mi.dot(&y);
            let p = if viol > 0.0 { &y - &dir * (viol / mi.dot(&dir)) } else { y.clone() };
            incr[i] = &y - &p;
            x = p;
        }
    }
    x.iter().copied().collect()
}

/// Random SPD matrix `L L' + 0.1 I`.
pub fn random_spd(rng: &mut ChaCha8Rng, j: usize) -> Matrix {
    let l = Matrix::from_fn(j, j, |_, _| rng.random::<f64>() - 0.5);
    l.matmul_t(&l).add(&Matrix::identity(j).scale(0.1))
}

pub fn random_vec(rng: &mut ChaCha8Rng, j: usize, s: f64) -> Vec<f64> {
    (0..j).map(|_| s * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

/// Either first differences (a monotone cone) or random rows.
pub fn random_cone(rng: &mut ChaCha8Rng, j: usize) -> Matrix {
    if rng.random_bool(0.5) {
        Matrix::from_fn(j - 1, j, |i, c| {
            if c == i + 1 {
                1.0
            } else if c == i {
                -1.0
            } else {
                0.0
            }
        })
    } else {
        let m = rng.random_range(1..=j);
        Matrix::from_fn(m, j, |_, _| 2.0 * rng.random::<f64>() - 1.0)
    }
}

// ---------------------------------------------------------------------------
// Suites shared by the oracle tests and the acceptance report. Each returns
// the worst error it saw.

use npiv_core::npiv::{cone_project, fit_unrestricted};
use npiv_core::randdist::{chisq_quantile, chisq_sf};
use npiv_core::stat::{compute_d, compute_shat, compute_vhat};

pub fn d_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 50);
        let fit = fit_unrestricted(&inst.y, &inst.psi, &inst.b, inst.mu.as_deref()).unwrap();
        for r in [&inst.resid, &fit.residuals] {
            let (want, abs) = brute_force_d(&inst, r);
            let got = compute_d(r, &fit);
            worst = worst.max(rel_err(got, want, 1e-3 * abs));
        }
    }
    worst
}

pub fn cone_suite(instances: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let j = rng.random_range(2..=6);
        let g = random_spd(&mut rng, j);
        let m = random_cone(&mut rng, j);
        let v = random_vec(&mut rng, j, 3.0);
        let got = cone_project(&v, &g, &m).unwrap().beta;
        let want = exhaustive_cone(&v, &g, &m);
        let scale = 1.0 + want.iter().map(|x| x * x).sum::<f64>().sqrt();
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err / scale);
    }
    worst
}

pub fn vs_suite(instances: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let (mut wv, mut ws): (f64, f64) = (0.0, 0.0);
    for _ in 0..instances {
        let inst = random_instance(&mut rng, 80);
        let fit = fit_unrestricted(&inst.y, &inst.psi, &inst.b, inst.mu.as_deref()).unwrap();
        let v = compute_vhat(&fit, &inst.resid).unwrap();
        wv = wv.max(rel_err(v, dense_vhat(&inst, &inst.resid), 1e-300));
        let s = compute_shat(&inst.psi, &inst.b, inst.mu.as_deref()).unwrap();
        ws = ws.max(rel_err(s, dense_shat(&inst), 1e-6));
    }
    (wv, ws)
}

pub const CHISQ_LEVELS: [f64; 6] = [0.9, 0.5, 0.1, 0.05, 0.01, 0.001];

/// Round trip `sf(quantile(a, k), k) = a` over the level grid and `k = 1..=64`.
pub fn chisq_suite() -> f64 {
    let mut worst: f64 = 0.0;
    for &a in &CHISQ_LEVELS {
        for k in 1..=64 {
            let q = chisq_quantile(a, k).unwrap();
            worst = worst.max(rel_err(chisq_sf(q, k), a, 0.0));
        }
    }
    worst
}
