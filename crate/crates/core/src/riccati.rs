//! Backward matrix Riccati equation
//!
//! ```text
//! dTheta/dt = A Theta + Theta A' + Theta H Theta - B M^-1 B' - C (I + Theta N)^-1 Theta C',
//! Theta_T = 0,   M = R + sigma^2/2 I,
//! ```
//!
//! integrated backward with classical RK4 and symmetrized after each step.
//! Coefficients at step midpoints are the average of the two knot values.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{TimeGrid, ValidatedModel};

/// Condition number of `I + Theta N` above which the resolvent is rejected.
pub const RESOLVENT_COND_MAX: f64 = 1e12;

/// Norm of `Theta` above which the solution is declared blown up.
pub const BLOWUP_NORM: f64 = 1e8;

/// Riccati coefficients frozen at one time.
#[derive(Debug, Clone)]
pub(crate) struct FrozenCoefficients {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub n: DMatrix<f64>,
    /// `B M^-1 B'`.
    pub bmb: DMatrix<f64>,
}

impl FrozenCoefficients {
    pub fn at_knot(m: &ValidatedModel, k: usize) -> Result<Self> {
        Self::build(
            m,
            m.a.at(k).clone(),
            m.b.at(k).clone(),
            m.c.at(k).clone(),
            m.h.at(k).clone(),
            m.n.at(k).clone(),
            m.r.at(k).clone(),
        )
    }

    /// Step `k`'s midpoint.
    pub fn at_midpoint(m: &ValidatedModel, k: usize) -> Result<Self> {
        Self::build(
            m,
            m.a.midpoint(k),
            m.b.midpoint(k),
            m.c.midpoint(k),
            m.h.midpoint(k),
            m.n.midpoint(k),
            m.r.midpoint(k),
        )
    }

    fn build(
        m: &ValidatedModel,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        h: DMatrix<f64>,
        n: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let weight = r + linalg::identity(m.control_dim) * (0.5 * m.sigma * m.sigma);
        let inv = linalg::spd_inverse(&linalg::symmetrize(&weight), "R + sigma^2/2 I")?;
        let bmb = linalg::symmetrize(&(&b * inv * b.transpose()));
        Ok(Self { a, c, h, n, bmb })
    }
}

/// `(I + Theta N)^-1` with the condition guard.
pub(crate) fn resolvent(theta: &DMatrix<f64>, n: &DMatrix<f64>, knot: usize) -> Result<DMatrix<f64>> {
    let dim = theta.nrows();
    let m = linalg::identity(dim) + theta * n;
    match linalg::inverse_with_condition(&m) {
        Some((inv, cond)) if cond <= RESOLVENT_COND_MAX && cond.is_finite() => Ok(inv),
        Some((_, cond)) => Err(Error::SingularResolvent { knot, condition: cond }),
        None => Err(Error::SingularResolvent {
            knot,
            condition: f64::INFINITY,
        }),
    }
}

pub(crate) fn riccati_rhs(theta: &DMatrix<f64>, f: &FrozenCoefficients, knot: usize) -> Result<DMatrix<f64>> {
    let res = resolvent(theta, &f.n, knot)?;
    Ok(&f.a * theta + theta * f.a.transpose() + theta * &f.h * theta
        - &f.bmb
        - &f.c * res * theta * f.c.transpose())
}

/// `Theta` and `dTheta/dt` on every knot of the model grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub theta: Vec<DMatrix<f64>>,
    pub theta_dot: Vec<DMatrix<f64>>,
}

impl RiccatiSolution {
    /// Cubic Hermite value of `Theta` at the midpoint of step `k`.
    pub fn midpoint(&self, k: usize) -> DMatrix<f64> {
        linalg::symmetrize(&linalg::hermite_midpoint(
            &self.theta[k],
            &self.theta[k + 1],
            &self.theta_dot[k],
            &self.theta_dot[k + 1],
            self.grid.dt(),
        ))
    }
}

/// Integrate the Riccati equation backward from `Theta_T = 0`.
pub fn solve_riccati(m: &ValidatedModel) -> Result<RiccatiSolution> {
    let grid = m.grid;
    let n = m.state_dim;
    let steps = grid.n_steps;
    let h = grid.dt();
    let mut theta = vec![DMatrix::zeros(n, n); steps + 1];
    let mut theta_dot = vec![DMatrix::zeros(n, n); steps + 1];

    theta_dot[steps] = riccati_rhs(&theta[steps], &FrozenCoefficients::at_knot(m, steps)?, steps)?;
    for k in (0..steps).rev() {
        let mid = FrozenCoefficients::at_midpoint(m, k)?;
        let left = FrozenCoefficients::at_knot(m, k)?;
        let y = &theta[k + 1];
        let k1 = &theta_dot[k + 1];
        let k2 = riccati_rhs(&(y - k1 * (0.5 * h)), &mid, k)?;
        let k3 = riccati_rhs(&(y - &k2 * (0.5 * h)), &mid, k)?;
        let k4 = riccati_rhs(&(y - &k3 * h), &left, k)?;
        let next = linalg::symmetrize(&(y - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)));
        let norm = next.norm();
        if !(norm <= BLOWUP_NORM) {
            return Err(Error::BlowUp { knot: k, norm });
        }
        theta_dot[k] = riccati_rhs(&next, &left, k)?;
        theta[k] = next;
    }
    Ok(RiccatiSolution { grid, theta, theta_dot })
}
