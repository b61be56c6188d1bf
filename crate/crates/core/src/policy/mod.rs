//! Optimal relaxed controls.
//!
//! In the LQ case the optimal control at time `t` is the Gaussian
//! `N(K_t P_t, Sigma_t)` with
//!
//! ```text
//! Sigma_t = sigma^2/2 (R_t + sigma^2/2 I)^-1,   K_t = -(R_t + sigma^2/2 I)^-1 B_t'
//! ```
//!
//! for a standard Gaussian prior, and `Sigma_t = sigma^2/2 R_t^-1`,
//! `K_t = -R_t^-1 B_t'` for the flat prior. The [`gibbs`] submodule handles
//! general scalar Hamiltonians on a grid.

pub mod gibbs;
mod grid;

pub use gibbs::{
    default_control_grid, gibbs_density, gibbs_fixed_point, lagrange_beta, FixedPointOptions,
    HamiltonianDerivativeSpec, LagrangeReport,
};
pub use grid::{ControlGrid, GridDensity};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ReferenceMeasure, ValidatedModel};

/// Gaussian feedback law `a ~ N(K_t P_t + delta_t, Sigma_t)` on the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicyRule {
    pub covariance: Vec<DMatrix<f64>>,
    pub gain: Vec<DMatrix<f64>>,
    /// Zero for the optimal rule.
    pub mean_shift: Vec<DVector<f64>>,
}

impl GaussianPolicyRule {
    pub fn n_knots(&self) -> usize {
        self.covariance.len()
    }

    pub fn control_dim(&self) -> usize {
        self.covariance.first().map_or(0, |s| s.nrows())
    }

    /// Policy mean `K_k p + delta_k`.
    pub fn mean(&self, k: usize, p: &DVector<f64>) -> DVector<f64> {
        &self.gain[k] * p + &self.mean_shift[k]
    }

    pub fn with_mean_shift(mut self, shift: Vec<DVector<f64>>) -> Result<Self> {
        if shift.len() != self.n_knots() || shift.iter().any(|d| d.len() != self.control_dim()) {
            return Err(Error::ShapeMismatch("mean shift must have one p-vector per knot".into()));
        }
        self.mean_shift = shift;
        Ok(self)
    }

    /// Multiply every covariance by `s > 0`.
    pub fn scale_covariance(mut self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::InvalidArgument(format!("covariance scale must be positive, got {s}")));
        }
        for c in &mut self.covariance {
            *c *= s;
        }
        Ok(self)
    }

    /// Lower Cholesky factors of every covariance.
    pub fn covariance_factors(&self) -> Result<Vec<DMatrix<f64>>> {
        self.covariance
            .iter()
            .enumerate()
            .map(|(k, s)| linalg::cholesky_lower(s, &format!("Sigma at knot {k}")))
            .collect()
    }
}

/// The optimal Gaussian rule of a validated LQ model.
pub fn optimal_policy_rule(m: &ValidatedModel) -> Result<GaussianPolicyRule> {
    let half_var = 0.5 * m.sigma * m.sigma;
    let p = m.control_dim;
    let knots = m.grid.n_knots();
    let mut covariance = Vec::with_capacity(knots);
    let mut gain = Vec::with_capacity(knots);
    for k in 0..knots {
        let weight = match &m.reference {
            ReferenceMeasure::StandardGaussian => m.regularized_control_weight(k),
            ReferenceMeasure::Flat => m.r.at(k).clone(),
            ReferenceMeasure::GridPotential { .. } => {
                return Err(Error::Unsupported(
                    "closed-form Gaussian policy needs a standard Gaussian or flat prior".into(),
                ))
            }
        };
        let inv = linalg::spd_inverse(&weight, &format!("control weight at knot {k}"))?;
        gain.push(-&inv * m.b.at(k).transpose());
        covariance.push(linalg::symmetrize(&(inv * half_var)));
    }
    Ok(GaussianPolicyRule {
        covariance,
        gain,
        mean_shift: vec![DVector::zeros(p); knots],
    })
}

/// LQ flat derivative `a -> P'B a + 1/2 R a^2` of a scalar control at knot
/// `k` for adjoint value `p`.
pub fn lq_hamiltonian_derivative(
    m: &ValidatedModel,
    k: usize,
    p: &DVector<f64>,
) -> Result<HamiltonianDerivativeSpec> {
    if m.control_dim != 1 {
        return Err(Error::Unsupported("grid Hamiltonians need a scalar control".into()));
    }
    if p.len() != m.state_dim {
        return Err(Error::ShapeMismatch("adjoint value must have length n".into()));
    }
    Ok(HamiltonianDerivativeSpec {
        c0: 0.0,
        c1: (m.b.at(k).transpose() * p)[0],
        c2: 0.5 * m.r.at(k)[(0, 0)],
        d1: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, CoefficientPath, LqModel, TimeGrid};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn model1() -> LqModel {
        LqModel::scalar(0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 1.0, 1.0, TimeGrid::new(1.0, 10).unwrap())
    }

    #[test]
    fn standard_gaussian_rule() {
        let rule = optimal_policy_rule(&validate_model(model1()).unwrap()).unwrap();
        for k in 0..rule.n_knots() {
            assert!((rule.covariance[k][(0, 0)] - 0.5).abs() < 1e-12);
            assert!((rule.gain[k][(0, 0)] + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_prior_rule() {
        let mut m = model1();
        m.reference = ReferenceMeasure::Flat;
        let rule = optimal_policy_rule(&validate_model(m).unwrap()).unwrap();
        assert!((rule.covariance[0][(0, 0)] - 1.0).abs() < 1e-12);
        assert!((rule.gain[0][(0, 0)] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_prior_with_singular_weight_fails() {
        let mut m = model1();
        m.reference = ReferenceMeasure::Flat;
        m.r = CoefficientPath::scalar(0.0, &m.grid);
        assert!(matches!(
            optimal_policy_rule(&validate_model(m).unwrap()),
            Err(Error::NonSpd(_))
        ));
    }

    #[test]
    fn zero_loading_gives_zero_mean() {
        let mut m = model1();
        m.b = CoefficientPath::scalar(0.0, &m.grid);
        let rule = optimal_policy_rule(&validate_model(m).unwrap()).unwrap();
        let v = rule.mean(3, &DVector::from_element(1, 17.0));
        assert_eq!(v[0], 0.0);
    }

    #[test]
    fn two_dimensional_covariance() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let mut m = model1();
        m.grid = g;
        m.control_dim = 2;
        m.a = CoefficientPath::scalar(0.0, &g);
        m.c = CoefficientPath::scalar(0.0, &g);
        m.h = CoefficientPath::scalar(0.0, &g);
        m.n = CoefficientPath::scalar(0.0, &g);
        m.b = CoefficientPath::constant(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &g);
        m.r = CoefficientPath::constant(DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0])), &g);
        let rule = optimal_policy_rule(&validate_model(m).unwrap()).unwrap();
        let s = &rule.covariance[2];
        assert!((s[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((s[(1, 1)] - 1.0 / 3.0).abs() < 1e-12);
        assert!(s[(0, 1)].abs() < 1e-15);
    }

    proptest! {
        /// Grid Gibbs density of the LQ derivative equals the closed-form
        /// Gaussian of the optimal rule.
        #[test]
        fn gibbs_matches_gaussian_rule(
            b in -2.0f64..2.0, r in 0.0f64..3.0, sigma in 0.3f64..2.0, p in -3.0f64..3.0
        ) {
            let mut m = model1();
            m.b = CoefficientPath::scalar(b, &m.grid);
            m.r = CoefficientPath::scalar(r, &m.grid);
            m.sigma = sigma;
            let vm = validate_model(m).unwrap();
            let rule = optimal_policy_rule(&vm).unwrap();
            let pv = DVector::from_element(1, p);
            let mean = rule.mean(0, &pv)[0];
            let var = rule.covariance[0][(0, 0)];
            let sd = var.sqrt();
            let grid = ControlGrid::centered(mean, 8.0 * sd, 1601).unwrap();
            let spec = lq_hamiltonian_derivative(&vm, 0, &pv).unwrap();
            let u = vm.reference.potential_on(&grid).unwrap();
            let d = gibbs_density(&grid, &spec.evaluate(&grid, 0.0), &u, sigma).unwrap();
            let sup = grid
                .points()
                .zip(d.values())
                .map(|(a, m)| {
                    let exact = (-(a - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
                    (exact - m).abs()
                })
                .fold(0.0, f64::max);
            prop_assert!(sup <= 1e-5, "sup {}", sup);
        }
    }
}
