//! Gibbs fixed-point layer for scalar actions.
//!
//! An optimal relaxed control is a fixed point of
//!
//! ```text
//! mu(a) ∝ exp(-U(a) - (2 / sigma^2) dH0/dm(mu)(a))
//! ```
//!
//! with multiplier `beta = sigma^2/2 (ln ∫ exp(...) da - 1)` enforcing unit
//! mass. Everything here works on a truncated uniform [`ControlGrid`].

use serde::{Deserialize, Serialize};

use super::grid::{ControlGrid, GridDensity};
use crate::error::{Error, Result};
use crate::model::ReferenceMeasure;

/// Below this (after the max shift) every weight underflows to zero.
const UNDERFLOW_EXPONENT: f64 = -700.0;

/// Tail mass beyond the grid that is tolerated for Gibbs densities.
pub const TAIL_MASS_TOL: f64 = 1e-8;

/// Quadratic-in-action flat derivative with a mean-field term:
/// `dH0/dm(mu)(a) = c0 + c1 a + c2 a^2 + d1 mean(mu) a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianDerivativeSpec {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub d1: f64,
}

impl HamiltonianDerivativeSpec {
    pub fn evaluate(&self, grid: &ControlGrid, mean: f64) -> Vec<f64> {
        let lin = self.c1 + self.d1 * mean;
        grid.points()
            .map(|a| self.c0 + lin * a + self.c2 * a * a)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangeReport {
    pub beta: f64,
    /// Sup over the grid of `|dH0/dm + sigma^2/2 (U + ln mu + 1) + beta|`.
    pub residual_sup: f64,
}

fn exponent(h: &[f64], u: &[f64], grid: &ControlGrid, sigma: f64) -> Result<Vec<f64>> {
    if h.len() != grid.n_points || u.len() != grid.n_points {
        return Err(Error::ShapeMismatch(format!(
            "expected {} values, got h={} U={}",
            grid.n_points,
            h.len(),
            u.len()
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let scale = 2.0 / (sigma * sigma);
    let e: Vec<f64> = h.iter().zip(u).map(|(hi, ui)| -ui - scale * hi).collect();
    if e.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite Gibbs exponent".into()));
    }
    Ok(e)
}

/// Shifted weights `exp(e - max e)` and the shift.
fn shifted_weights(e: &[f64]) -> Result<(Vec<f64>, f64)> {
    let shift = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if e.iter().all(|x| x - shift < UNDERFLOW_EXPONENT) {
        return Err(Error::DegenerateMass);
    }
    Ok((e.iter().map(|x| (x - shift).exp()).collect(), shift))
}

/// Normalized Gibbs density `exp(-U - 2/sigma^2 h)` on the grid.
pub fn gibbs_density(grid: &ControlGrid, h: &[f64], u: &[f64], sigma: f64) -> Result<GridDensity> {
    let e = exponent(h, u, grid, sigma)?;
    let (w, _) = shifted_weights(&e)?;
    GridDensity::from_unnormalized(grid.clone(), w)
}

/// Lagrange multiplier of the unit-mass constraint and the sup residual of
/// the first-order condition at the Gibbs density.
pub fn lagrange_beta(grid: &ControlGrid, h: &[f64], u: &[f64], sigma: f64) -> Result<LagrangeReport> {
    let e = exponent(h, u, grid, sigma)?;
    let (w, shift) = shifted_weights(&e)?;
    let log_z = shift + grid.integrate(&w).ln();
    let half_var = 0.5 * sigma * sigma;
    let beta = half_var * (log_z - 1.0);
    let mu = GridDensity::from_unnormalized(grid.clone(), w)?;
    let residual_sup = h
        .iter()
        .zip(u)
        .zip(mu.values())
        // Subnormal values have lost relative precision in ln.
        .filter(|(_, m)| **m >= f64::MIN_POSITIVE)
        .map(|((hi, ui), m)| (hi + half_var * (ui + m.ln() + 1.0) + beta).abs())
        .fold(0.0, f64::max);
    Ok(LagrangeReport { beta, residual_sup })
}

/// Damped fixed-point iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointOptions {
    /// Damping `lambda` in (0, 1].
    pub damping: f64,
    /// Stop once `||mu - Gibbs(mu)||_L1 < tol`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Default truncation `[-10 s, 10 s]` with `s` the prior's standard
/// deviation (1 for the improper flat prior).
pub fn default_control_grid(reference: &ReferenceMeasure, n_points: usize) -> Result<ControlGrid> {
    if let ReferenceMeasure::GridPotential { grid, .. } = reference {
        return Ok(grid.clone());
    }
    let s = reference.prior_std().unwrap_or(1.0);
    ControlGrid::new(-10.0 * s, 10.0 * s, n_points)
}

/// Solve `mu = Gibbs(mu)` by damped iteration
/// `mu <- (1 - lambda) mu + lambda Gibbs(mu)` started from the prior.
///
/// Returns the density and the number of damped updates applied. On
/// success `||mu - Gibbs(mu)||_L1 < tol`. Gibbs densities are required to
/// leave less than [`TAIL_MASS_TOL`] outside the grid unless the prior is
/// itself a grid potential.
pub fn gibbs_fixed_point(
    spec: &HamiltonianDerivativeSpec,
    reference: &ReferenceMeasure,
    grid: &ControlGrid,
    sigma: f64,
    opts: FixedPointOptions,
) -> Result<(GridDensity, usize)> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidArgument("tol > 0 and max_iter >= 1 required".into()));
    }
    let u = reference.potential_on(grid)?;
    let check_tails = !matches!(reference, ReferenceMeasure::GridPotential { .. });
    let zero = vec![0.0; grid.n_points];
    let mut mu = gibbs_density(grid, &zero, &u, sigma)?;

    let mut gap = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let h = spec.evaluate(grid, mu.mean());
        let next = gibbs_density(grid, &h, &u, sigma)?;
        if check_tails {
            let tail = next.tail_mass_estimate();
            if tail > TAIL_MASS_TOL {
                return Err(Error::GridTooNarrow { tail_mass: tail });
            }
        }
        gap = mu.l1_distance(&next)?;
        if gap < opts.tol {
            return Ok((mu, iter));
        }
        mu = mu.mix(&next, opts.damping)?;
    }
    Err(Error::NoConvergence {
        max_iter: opts.max_iter,
        gap,
    })
}
