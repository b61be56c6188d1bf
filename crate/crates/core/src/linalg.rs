//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated before a matrix is rejected.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalue floor for PSD tests, scaled by `1 + ||M||`.
pub const PSD_FLOOR: f64 = 1e-10;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `max |m_ij - m_ji| / (1 + max |m_ij|)`.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = 1.0 + m.amax();
    (m - m.transpose()).amax() / scale
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// PSD with the floor `-1e-10 (1 + ||M||_F)`; `m` must already be symmetric.
pub fn is_psd(m: &DMatrix<f64>) -> (bool, f64) {
    let lam = min_eigenvalue(m);
    (lam >= -PSD_FLOOR * (1.0 + m.norm()), lam)
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NonSpd(what.to_string()))
}

/// `ln det` of an SPD matrix via Cholesky.
pub fn spd_log_det(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let c = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NonSpd(what.to_string()))?;
    Ok(2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense LU inverse together with the 1-norm condition number.
/// Returns `None` when the LU factorization is singular.
pub fn inverse_with_condition(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let inv = m.clone().lu().try_inverse()?;
    let cond = one_norm(m) * one_norm(&inv);
    Some((inv, cond))
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

/// Lower Cholesky factor of an SPD matrix.
pub fn cholesky_lower(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NonSpd(what.to_string()))
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Cubic Hermite value at the midpoint of `[y0, y1]` given endpoint slopes
/// and step `h`.
pub fn hermite_midpoint(
    y0: &DMatrix<f64>,
    y1: &DMatrix<f64>,
    d0: &DMatrix<f64>,
    d1: &DMatrix<f64>,
    h: f64,
) -> DMatrix<f64> {
    (y0 + y1) * 0.5 + (d0 - d1) * (h / 8.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_is_exact_for_cubics() {
        // y = t^3 on [1, 2]
        let y0 = DMatrix::from_element(1, 1, 1.0);
        let y1 = DMatrix::from_element(1, 1, 8.0);
        let d0 = DMatrix::from_element(1, 1, 3.0);
        let d1 = DMatrix::from_element(1, 1, 12.0);
        let mid = hermite_midpoint(&y0, &y1, &d0, &d1, 1.0);
        assert!((mid[(0, 0)] - 1.5f64.powi(3)).abs() < 1e-14);
    }

    #[test]
    fn condition_of_identity_is_one() {
        let (_, c) = inverse_with_condition(&identity(3)).unwrap();
        assert!((c - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psd_floor() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-13]);
        assert!(is_psd(&m).0);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-6]);
        assert!(!is_psd(&m).0);
    }
}
