//! Dense matrix kernels: SVD, pseudo-inverses, symmetric square roots,
//! orthogonal projections and Cholesky factorization.
//!
//! Everything here is generic over [`Real`] so the kernels can be exercised
//! in single precision; the estimators above this layer use `f64`.

mod eigen;
mod matrix;
mod svd;

pub use eigen::{sym_eigen, SymEigen};
pub use matrix::{dot, norm2, DenseMatrix};
pub use svd::{svd, SvdResult};

use crate::error::{NpivError, Result};
use crate::scalar::Real;

/// Relative singular-value cutoff used when a generalized inverse is requested
/// without an explicit tolerance.
pub fn default_rcond<T: Real>(rows: usize, cols: usize) -> T {
    T::c(1e-12) * T::from_count(rows.max(cols))
}

/// Moore-Penrose pseudo-inverse with singular values below `rcond * s_max` dropped.
pub fn pinv<T: Real>(a: &DenseMatrix<T>, rcond: T) -> Result<DenseMatrix<T>> {
    if !(rcond > T::zero() && rcond < T::one()) {
        return Err(NpivError::input(format!("pinv: rcond must lie in (0, 1), got {rcond}")));
    }
    let dec = svd(a)?;
    Ok(pinv_from_svd(&dec, rcond))
}

pub(crate) fn pinv_from_svd<T: Real>(dec: &SvdResult<T>, rcond: T) -> DenseMatrix<T> {
    let m = dec.u.rows();
    let n = dec.vt.cols();
    let cut = rcond * dec.s_max();
    let mut out = DenseMatrix::zeros(n, m);
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if !(s > cut) || s == T::zero() {
            continue;
        }
        let inv = T::one() / s;
        for i in 0..n {
            let a = dec.vt[(k, i)] * inv;
            if a == T::zero() {
                continue;
            }
            let row = out.row_mut(i);
            for (j, r) in row.iter_mut().enumerate() {
                *r += a * dec.u[(j, k)];
            }
        }
    }
    out
}

/// Orthogonal projector onto the column space of `b` (`B (B'B)^- B'`).
pub fn projection_matrix<T: Real>(b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let dec = svd(b)?;
    let r = dec.rank(default_rcond(b.rows(), b.cols()));
    let n = b.rows();
    let mut p = DenseMatrix::zeros(n, n);
    for k in 0..r {
        for i in 0..n {
            let a = dec.u[(i, k)];
            if a == T::zero() {
                continue;
            }
            for j in 0..n {
                p[(i, j)] += a * dec.u[(j, k)];
            }
        }
    }
    Ok(p)
}

/// Symmetrize `g` after checking it is symmetric to within `1e-8 * ||g||_F`.
fn checked_symmetric<T: Real>(g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if g.rows() != g.cols() {
        return Err(NpivError::input(format!(
            "expected a square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    let asym = g.max_asymmetry();
    let tol = T::c(1e-8) * frobenius_norm(g);
    if asym > tol {
        return Err(NpivError::input(format!(
            "matrix is not symmetric: max asymmetry {asym} exceeds {tol}"
        )));
    }
    Ok(g.symmetrized())
}

/// `H` with `H G H = I` on the eigenspace of eigenvalues above `rcond * lambda_max`.
pub fn sym_inv_sqrt<T: Real>(g: &DenseMatrix<T>, rcond: T) -> Result<DenseMatrix<T>> {
    let eig = sym_eigen(&checked_symmetric(g)?)?;
    let lmax = eig.values.first().copied().unwrap_or_else(T::zero);
    let cut = rcond * lmax;
    Ok(eig.reassemble(|l| {
        if l > cut && l > T::zero() {
            T::one() / l.sqrt()
        } else {
            T::zero()
        }
    }))
}

/// Principal square root of a positive semidefinite matrix; negative
/// round-off eigenvalues are clipped to zero.
pub fn sym_sqrt<T: Real>(g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let eig = sym_eigen(&checked_symmetric(g)?)?;
    Ok(eig.reassemble(|l| l.max(T::zero()).sqrt()))
}

pub fn frobenius_norm<T: Real>(a: &DenseMatrix<T>) -> T {
    a.as_slice().iter().map(|&v| v * v).sum::<T>().sqrt()
}

/// Lower-triangular Cholesky factor `L` with `G = L L'`.
pub fn cholesky<T: Real>(g: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = g.rows();
    if g.cols() != n {
        return Err(NpivError::input("cholesky: matrix is not square"));
    }
    let scale = g.max_abs().max(T::min_positive_value());
    let mut l = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = g[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::epsilon() * scale * T::from_count(n)) {
            return Err(NpivError::input(format!(
                "cholesky: matrix is not positive definite (pivot {j} = {d})"
            )));
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = g[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn forward_sub<T: Real>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solve `L' x = y` for lower-triangular `L`.
pub fn backward_sub_t<T: Real>(l: &DenseMatrix<T>, y: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve `G x = b` given the Cholesky factor of `G`.
pub fn cholesky_solve<T: Real>(l: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    backward_sub_t(l, &forward_sub(l, b))
}

/// Numerical rank with relative tolerance `rcond`.
pub fn rank<T: Real>(a: &DenseMatrix<T>, rcond: T) -> Result<usize> {
    Ok(svd(a)?.rank(rcond))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn max_diff(a: &DenseMatrix<f64>, b: &DenseMatrix<f64>) -> f64 {
        a.sub(b).max_abs()
    }

    #[test]
    fn new_rejects_bad_shapes_and_nan() {
        assert!(DenseMatrix::<f64>::new(0, 2, vec![]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0]).is_err());
        assert!(DenseMatrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd(&DenseMatrix::<f64>::identity(3)).unwrap();
        for v in &s.singular_values {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-14);
        }
        let d = DenseMatrix::from_diag(&[1.0, 3.0, 2.0]);
        let s = svd(&d).unwrap();
        assert_abs_diff_eq!(s.singular_values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.singular_values[1], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.singular_values[2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn svd_reconstructs_random_and_wide() {
        for (r, c, seed) in [(5, 3, 1), (3, 5, 2), (40, 12, 3), (7, 7, 4)] {
            let a = random(r, c, seed);
            let dec = svd(&a).unwrap();
            let err = frobenius_norm(&a.sub(&dec.reconstruct()));
            assert!(err <= 1e-10 * (1.0 + frobenius_norm(&a)), "{r}x{c}: {err}");
            assert!(dec.singular_values.windows(2).all(|w| w[0] >= w[1]));
            // orthonormal columns of U and rows of Vt
            let utu = dec.u.t_matmul(&dec.u);
            assert!(max_diff(&utu, &DenseMatrix::identity(utu.rows())) < 1e-12);
            let vvt = dec.vt.matmul_t(&dec.vt);
            assert!(max_diff(&vvt, &DenseMatrix::identity(vvt.rows())) < 1e-12);
        }
    }

    #[test]
    fn svd_rank_deficient_keeps_orthonormal_u() {
        let u = [1.0, 2.0, 3.0, 4.0];
        let v = [1.0, -1.0, 0.5];
        let a = DenseMatrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let dec = svd(&a).unwrap();
        assert_eq!(dec.rank(1e-12), 1);
        let utu = dec.u.t_matmul(&dec.u);
        assert!(max_diff(&utu, &DenseMatrix::identity(3)) < 1e-12);
        assert!(frobenius_norm(&a.sub(&dec.reconstruct())) < 1e-12);
    }

    #[test]
    fn singular_values_of_transpose_match() {
        let a = random(6, 4, 9);
        let s1 = svd(&a).unwrap().singular_values;
        let s2 = svd(&a.transpose()).unwrap().singular_values;
        for (x, y) in s1.iter().zip(&s2) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn pinv_full_rank_is_inverse() {
        let a = DenseMatrix::from_rows(&[vec![4.0, 7.0], vec![2.0, 6.0]]).unwrap();
        let inv = pinv(&a, 1e-12).unwrap();
        let expected = DenseMatrix::from_rows(&[vec![0.6, -0.7], vec![-0.2, 0.4]]).unwrap();
        assert!(max_diff(&inv, &expected) < 1e-13);
    }

    #[test]
    fn pinv_zero_is_zero() {
        let z = DenseMatrix::<f64>::zeros(3, 2);
        let p = pinv(&z, 1e-12).unwrap();
        assert_eq!(p.shape(), (2, 3));
        assert_eq!(p.max_abs(), 0.0);
    }

    #[test]
    fn pinv_rank_one_closed_form() {
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0];
        let a = DenseMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        let uu: f64 = u.iter().map(|x| x * x).sum();
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let expected = DenseMatrix::from_fn(2, 3, |i, j| v[i] * u[j] / (uu * vv));
        assert!(max_diff(&pinv(&a, 1e-12).unwrap(), &expected) < 1e-14);
    }

    #[test]
    fn pinv_penrose_identities() {
        let a = random(6, 4, 11);
        let p = pinv(&a, 1e-12).unwrap();
        assert!(max_diff(&a.matmul(&p).matmul(&a), &a) < 1e-8);
        assert!(max_diff(&p.matmul(&a).matmul(&p), &p) < 1e-8);
        let ap = a.matmul(&p);
        assert!(max_diff(&ap, &ap.transpose()) < 1e-8);
        let pa = p.matmul(&a);
        assert!(max_diff(&pa, &pa.transpose()) < 1e-8);
        assert!(max_diff(&pinv(&p, 1e-12).unwrap(), &a) < 1e-8);
        assert!(pinv(&a, 0.0).is_err());
        assert!(pinv(&a, 1.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let ones = DenseMatrix::from_fn(4, 1, |_, _| 1.0);
        let p = projection_matrix(&ones).unwrap();
        assert!(p.as_slice().iter().all(|v: &f64| (v - 0.25).abs() < 1e-14));

        let q = svd(&random(6, 2, 5)).unwrap().u;
        let p = projection_matrix(&q).unwrap();
        assert!(max_diff(&p, &q.matmul_t(&q)) < 1e-12);

        let b = random(8, 3, 6);
        let p = projection_matrix(&b).unwrap();
        assert!(max_diff(&p.matmul(&b), &b) < 1e-10);
        assert!(max_diff(&p, &p.transpose()) < 1e-8);
        assert!(max_diff(&p.matmul(&p), &p) < 1e-8);
        assert_abs_diff_eq!(p.trace(), 3.0, epsilon = 1e-8);
    }

    #[test]
    fn sym_inv_sqrt_examples() {
        let h = sym_inv_sqrt(&DenseMatrix::<f64>::identity(3), 1e-12).unwrap();
        assert!(max_diff(&h, &DenseMatrix::identity(3)) < 1e-14);

        let h = sym_inv_sqrt(&DenseMatrix::from_diag(&[4.0, 9.0]), 1e-12).unwrap();
        assert!(max_diff(&h, &DenseMatrix::from_diag(&[0.5, 1.0 / 3.0])) < 1e-14);

        let a = random(7, 4, 21);
        let g = a.t_matmul(&a);
        let h = sym_inv_sqrt(&g, 1e-12).unwrap();
        assert!(max_diff(&h.matmul(&g).matmul(&h), &DenseMatrix::identity(4)) < 1e-10);
    }

    #[test]
    fn sym_inv_sqrt_rejects_asymmetric() {
        let g = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_inv_sqrt(&g, 1e-12), Err(NpivError::Input(_))));
    }

    #[test]
    fn sym_sqrt_squares_back() {
        let a = random(9, 5, 8);
        let g = a.t_matmul(&a);
        let s = sym_sqrt(&g).unwrap();
        assert!(max_diff(&s.matmul(&s), &g) < 1e-10);
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&DenseMatrix::<f64>::zeros(2, 3)), 0.0);
        assert_abs_diff_eq!(
            frobenius_norm(&DenseMatrix::<f64>::identity(5)),
            5f64.sqrt(),
            epsilon = 1e-15
        );
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_abs_diff_eq!(frobenius_norm(&a), 30f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(frobenius_norm(&a), a.t_matmul(&a).trace().sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn frobenius_orthogonal_invariance() {
        let a = random(5, 4, 31);
        let q1 = svd(&random(5, 5, 32)).unwrap().u;
        let q2 = svd(&random(4, 4, 33)).unwrap().u;
        let b = q1.matmul(&a).matmul(&q2);
        assert_abs_diff_eq!(frobenius_norm(&a), frobenius_norm(&b), epsilon = 1e-10);
    }

    #[test]
    fn cholesky_solves() {
        let a = random(8, 4, 41);
        let g = a.t_matmul(&a);
        let l = cholesky(&g).unwrap();
        assert!(max_diff(&l.matmul_t(&l), &g) < 1e-12);
        let b = [1.0, 2.0, -1.0, 0.5];
        let x = cholesky_solve(&l, &b);
        let gx = g.mat_vec(&x);
        for (u, v) in gx.iter().zip(&b) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-10);
        }
        let singular = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(cholesky(&singular).is_err());
    }

    #[test]
    fn single_precision_kernels() {
        let a: DenseMatrix<f32> = random(6, 3, 51).cast();
        let dec = svd(&a).unwrap();
        let err = frobenius_norm(&a.sub(&dec.reconstruct()));
        assert!(err < 1e-5 * (1.0 + frobenius_norm(&a)));
        let p = pinv(&a, 1e-6).unwrap();
        assert!(a.matmul(&p).matmul(&a).sub(&a).max_abs() < 1e-4);
    }
}
