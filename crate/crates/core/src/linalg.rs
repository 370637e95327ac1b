//! Dense linear-algebra helpers shared by the learning rules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative singular-value cutoff used by [`pinv`].
pub const PINV_RCOND: f64 = 1e-12;

pub type Matrix = DMatrix<f64>;

fn to_faer(m: &Matrix) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Singular values sorted in descending order.
pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s = to_faer(m).singular_values().unwrap_or_else(|_| vec![f64::NAN; m.nrows().min(m.ncols())]);
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Thin SVD with singular triplets sorted by descending singular value.
///
/// Returns `(U, s, Vᵀ)` with `U` of shape `m × k`, `Vᵀ` of shape `k × n`, `k = min(m, n)`.
pub fn sorted_svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let k = m.nrows().min(m.ncols());
    let Ok(svd) = to_faer(m).thin_svd() else {
        return (Matrix::zeros(m.nrows(), k), vec![f64::NAN; k], Matrix::zeros(k, m.ncols()));
    };
    let u = from_faer(svd.U());
    let v = from_faer(svd.V());
    let sv: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let mut us = Matrix::zeros(m.nrows(), k);
    let mut vts = Matrix::zeros(k, m.ncols());
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        us.set_column(dst, &u.column(src));
        vts.set_row(dst, &v.column(src).transpose());
        s.push(sv[src]);
    }
    (us, s, vts)
}

/// Moore–Penrose pseudoinverse; singular values below `PINV_RCOND * sigma_max` are dropped.
pub fn pinv(m: &Matrix) -> Result<Matrix> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pseudoinverse input".into()));
    }
    let (u, s, vt) = sorted_svd(m);
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    let Some(&smax) = s.first() else {
        return Ok(out);
    };
    let cutoff = PINV_RCOND * smax;
    for (i, &si) in s.iter().enumerate() {
        if si <= cutoff || si == 0.0 {
            break;
        }
        // out += v_i * u_i^T / s_i
        let v = vt.row(i).transpose();
        let ut = u.column(i).transpose();
        out += (v * ut) / si;
    }
    Ok(out)
}

/// Solves `S X = B` for symmetric positive definite `S` by Cholesky factorisation.
pub fn spd_solve(s: &Matrix, b: &Matrix) -> Result<Matrix> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Solver("matrix is not positive definite".into()))?;
    Ok(chol.solve(b))
}

/// Extreme eigenvalues `(min, max)` of the symmetric part `(M + Mᵀ) / 2`.
pub fn symmetric_extremes(m: &Matrix) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub(crate) fn dims(m: &Matrix) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let m = Matrix::from_row_slice(2, 2, &[2.0, 1.0, 0.5, 3.0]);
        let p = pinv(&m).unwrap();
        let id = &m * &p;
        assert!((id - Matrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pinv_satisfies_penrose_conditions_on_rank_deficient() {
        let a = Matrix::from_row_slice(3, 1, &[1.0, 2.0, -1.0]);
        let b = Matrix::from_row_slice(1, 4, &[0.5, -1.0, 2.0, 1.0]);
        let m = &a * &b;
        let p = pinv(&m).unwrap();
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        assert!((&p * &m * &p - &p).norm() < 1e-12);
        let mp = &m * &p;
        assert!((&mp - mp.transpose()).norm() < 1e-12);
    }

    #[test]
    fn pinv_rejects_nan() {
        let m = Matrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(pinv(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sorted_svd_reconstructs() {
        let m = Matrix::from_row_slice(3, 2, &[1.0, 4.0, -2.0, 0.5, 3.0, 1.0]);
        let (u, s, vt) = sorted_svd(&m);
        assert!(s[0] >= s[1]);
        let rec = &u * Matrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * &vt;
        assert!((rec - m).norm() < 1e-12);
    }

    #[test]
    fn low_rank_square_svd_reconstructs() {
        // rank-2 Gram matrix with many exact zero singular values
        let x = Matrix::from_fn(20, 2, |i, j| ((i * 7 + j * 3) as f64).sin() + 0.1 * j as f64);
        let m = &x * x.transpose();
        let (u, s, vt) = sorted_svd(&m);
        let rec = &u * Matrix::from_diagonal(&nalgebra::DVector::from_vec(s)) * &vt;
        assert!((rec - &m).norm() < 1e-12 * m.norm());
        let p = pinv(&m).unwrap();
        assert!((&m * &p * &m - &m).norm() < 1e-12 * m.norm());
    }
}
