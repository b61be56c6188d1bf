use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Uniform lattice on `[a_min, a_max]` for a scalar action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGrid {
    pub a_min: f64,
    pub a_max: f64,
    pub n_points: usize,
}

impl ControlGrid {
    pub fn new(a_min: f64, a_max: f64, n_points: usize) -> Result<Self> {
        if !(a_min.is_finite() && a_max.is_finite() && a_min < a_max) {
            return Err(Error::InvalidArgument(format!(
                "control grid needs a_min < a_max, got [{a_min}, {a_max}]"
            )));
        }
        if n_points < 3 {
            return Err(Error::InvalidArgument(
                "control grid needs at least 3 points".into(),
            ));
        }
        Ok(Self { a_min, a_max, n_points })
    }

    /// Grid centred on `center` spanning `half_width` on each side.
    pub fn centered(center: f64, half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(center - half_width, center + half_width, n_points)
    }

    pub fn step(&self) -> f64 {
        (self.a_max - self.a_min) / (self.n_points - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.a_max
        } else {
            self.a_min + i as f64 * self.step()
        }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.point(i))
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        stats::trapezoid(values, self.step())
    }
}

/// Nonnegative density values on a [`ControlGrid`], trapezoid-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: ControlGrid,
    values: Vec<f64>,
}

impl GridDensity {
    /// Normalize `values` so the trapezoid integral is one.
    pub fn from_unnormalized(grid: ControlGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points {
            return Err(Error::ShapeMismatch(format!(
                "{} density values for {} grid points",
                values.len(),
                grid.n_points
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "density values must be finite and nonnegative".into(),
            ));
        }
        let mass = grid.integrate(&values);
        if !(mass > 0.0) {
            return Err(Error::DegenerateMass);
        }
        let values = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    /// Wrap values as-is, without normalizing.
    pub fn raw(grid: ControlGrid, values: Vec<f64>) -> Self {
        Self { grid, values }
    }

    /// `N(mean, var)` sampled on the grid and renormalized.
    pub fn gaussian(grid: ControlGrid, mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0) {
            return Err(Error::NonSpd("variance".into()));
        }
        let values = grid
            .points()
            .map(|a| (-(a - mean) * (a - mean) / (2.0 * var)).exp())
            .collect();
        Self::from_unnormalized(grid, values)
    }

    pub fn grid(&self) -> &ControlGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn mean(&self) -> f64 {
        let xs: Vec<f64> = self
            .grid
            .points()
            .zip(&self.values)
            .map(|(a, m)| a * m)
            .collect();
        self.grid.integrate(&xs)
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        let xs: Vec<f64> = self
            .grid
            .points()
            .zip(&self.values)
            .map(|(a, m)| (a - mu) * (a - mu) * m)
            .collect();
        self.grid.integrate(&xs)
    }

    fn same_grid(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("densities live on different grids".into()));
        }
        Ok(())
    }

    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let d: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .collect();
        Ok(self.grid.integrate(&d))
    }

    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `(1 - w) self + w other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            values,
        })
    }

    /// Conservative estimate of the mass beyond both grid ends, assuming the
    /// density keeps decaying geometrically at the rate seen on the last
    /// step. Infinite when an end is not decaying.
    pub fn tail_mass_estimate(&self) -> f64 {
        let n = self.values.len();
        let h = self.grid.step();
        let tail = |end: f64, inner: f64| -> f64 {
            if end == 0.0 {
                return 0.0;
            }
            let r = end / inner;
            if !(r < 1.0) {
                return f64::INFINITY;
            }
            h * end * r / (1.0 - r)
        };
        tail(self.values[0], self.values[1]) + tail(self.values[n - 1], self.values[n - 2])
    }
}
