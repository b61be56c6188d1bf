//! Problem instances for the entropy-regularized backward LQ problem.
//!
//! The state is a linear BSDE driven by a scalar Brownian motion,
//!
//! ```text
//! dY = (A Y + B v + C Z) dt + Z dW,   Y_T = xi,
//! ```
//!
//! where `v` is the mean of the relaxed (measure-valued) control, and the
//! cost is
//!
//! ```text
//! J = 1/2 E[ int (Y'HY + int a'Ra pi(da) + Z'NZ + sigma^2 Ent(pi | e^-U)) dt + Y_0'G Y_0 ].
//! ```
//!
//! [`validate_model`] turns an [`LqModel`] into a [`ValidatedModel`], which is
//! what every solver downstream accepts.

use std::f64::consts::PI;
use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::{ControlGrid, GridDensity};
use crate::stats;

/// Uniform time grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "horizon must be positive, got {t_end}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be positive".into()));
        }
        Ok(Self { t_end, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn n_knots(&self) -> usize {
        self.n_steps + 1
    }

    /// Knot `k`; the last knot is `T` exactly.
    pub fn t(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_end
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn knots(&self) -> Vec<f64> {
        (0..self.n_knots()).map(|k| self.t(k)).collect()
    }
}

/// A matrix-valued deterministic coefficient sampled on the knots of a
/// [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPath {
    rows: usize,
    cols: usize,
    values: Vec<DMatrix<f64>>,
}

impl CoefficientPath {
    pub fn constant(m: DMatrix<f64>, grid: &TimeGrid) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            values: vec![m; grid.n_knots()],
        }
    }

    pub fn scalar(x: f64, grid: &TimeGrid) -> Self {
        Self::constant(DMatrix::from_element(1, 1, x), grid)
    }

    /// Piecewise-linear interpolation of `(times, values)` onto the knots.
    /// Outside `[times[0], times[last]]` the end values are held.
    pub fn piecewise_linear(
        times: &[f64],
        values: &[DMatrix<f64>],
        grid: &TimeGrid,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::ShapeMismatch(
                "piecewise-linear coefficient needs one matrix per breakpoint".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let (rows, cols) = values[0].shape();
        if values.iter().any(|v| v.shape() != (rows, cols)) {
            return Err(Error::ShapeMismatch(
                "breakpoint matrices differ in shape".into(),
            ));
        }
        let sample = |t: f64| -> DMatrix<f64> {
            if t <= times[0] {
                return values[0].clone();
            }
            let last = times.len() - 1;
            if t >= times[last] {
                return values[last].clone();
            }
            let j = times.partition_point(|&s| s <= t) - 1;
            let w = (t - times[j]) / (times[j + 1] - times[j]);
            &values[j] * (1.0 - w) + &values[j + 1] * w
        };
        Ok(Self {
            rows,
            cols,
            values: grid.knots().into_iter().map(sample).collect(),
        })
    }

    /// One matrix per knot, used as given.
    pub fn from_knots(values: Vec<DMatrix<f64>>) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::ShapeMismatch("empty coefficient path".into()));
        };
        let (rows, cols) = first.shape();
        if values.iter().any(|v| v.shape() != (rows, cols)) {
            return Err(Error::ShapeMismatch("knot matrices differ in shape".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, k: usize) -> &DMatrix<f64> {
        &self.values[k]
    }

    /// Linear interpolation at the midpoint of step `k` (between knots `k`
    /// and `k + 1`). Exact for coefficients that are linear on each step.
    pub fn midpoint(&self, k: usize) -> DMatrix<f64> {
        (&self.values[k] + &self.values[k + 1]) * 0.5
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|m| m.iter().all(|&x| x == 0.0))
    }
}

/// Terminal value `xi` of the state BSDE.
#[derive(Debug, Clone, PartialEq)]
pub enum TerminalCondition {
    Deterministic(DVector<f64>),
    /// `xi = c + q W_T`.
    AffineInBrownian { c: DVector<f64>, q: DVector<f64> },
}

impl TerminalCondition {
    pub fn constant_part(&self) -> &DVector<f64> {
        match self {
            TerminalCondition::Deterministic(c) => c,
            TerminalCondition::AffineInBrownian { c, .. } => c,
        }
    }

    /// Loading on `W_T` (zero for deterministic terminal values).
    pub fn brownian_loading(&self) -> DVector<f64> {
        match self {
            TerminalCondition::Deterministic(c) => DVector::zeros(c.len()),
            TerminalCondition::AffineInBrownian { q, .. } => q.clone(),
        }
    }

    pub fn sample(&self, w_t: f64) -> DVector<f64> {
        match self {
            TerminalCondition::Deterministic(c) => c.clone(),
            TerminalCondition::AffineInBrownian { c, q } => c + q * w_t,
        }
    }

    pub fn is_deterministic(&self) -> bool {
        match self {
            TerminalCondition::Deterministic(_) => true,
            TerminalCondition::AffineInBrownian { q, .. } => q.iter().all(|&x| x == 0.0),
        }
    }
}

/// Reference (prior) measure `e^{-U}` of the entropy penalty.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceMeasure {
    /// `U(a) = |a|^2 / 2 + (p/2) ln 2 pi`.
    StandardGaussian,
    /// `U = 0`; improper, only meaningful for the cost-of-exploration path.
    Flat,
    /// Potential sampled on a one-dimensional control grid.
    GridPotential { grid: ControlGrid, values: Vec<f64> },
}

impl ReferenceMeasure {
    /// Potential `U` evaluated on a one-dimensional control grid.
    pub fn potential_on(&self, grid: &ControlGrid) -> Result<Vec<f64>> {
        match self {
            ReferenceMeasure::StandardGaussian => {
                let c = 0.5 * (2.0 * PI).ln();
                Ok(grid.points().map(|a| 0.5 * a * a + c).collect())
            }
            ReferenceMeasure::Flat => Ok(vec![0.0; grid.n_points]),
            ReferenceMeasure::GridPotential { grid: g, values } => {
                if g != grid {
                    return Err(Error::GridMismatch(
                        "reference potential lives on a different control grid".into(),
                    ));
                }
                Ok(values.clone())
            }
        }
    }

    /// Standard deviation of the (normalized) prior, used to size default
    /// control grids. `None` for the improper flat prior.
    pub fn prior_std(&self) -> Option<f64> {
        match self {
            ReferenceMeasure::StandardGaussian => Some(1.0),
            ReferenceMeasure::Flat => None,
            ReferenceMeasure::GridPotential { grid, values } => {
                let shift = values.iter().copied().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = values.iter().map(|u| (shift - u).exp()).collect();
                GridDensity::from_unnormalized(grid.clone(), w)
                    .ok()
                    .map(|d| d.variance().sqrt())
            }
        }
    }
}

/// A backward LQ problem instance. Brownian dimension is one.
#[derive(Debug, Clone, PartialEq)]
pub struct LqModel {
    /// State dimension `n`.
    pub state_dim: usize,
    /// Control dimension `p`.
    pub control_dim: usize,
    /// Drift on `Y` (n x n).
    pub a: CoefficientPath,
    /// Control loading (n x p).
    pub b: CoefficientPath,
    /// Drift on `Z` (n x n).
    pub c: CoefficientPath,
    /// State weight, PSD (n x n).
    pub h: CoefficientPath,
    /// `Z` weight, PSD (n x n).
    pub n: CoefficientPath,
    /// Control weight, PSD (p x p).
    pub r: CoefficientPath,
    /// Initial-state weight, PSD (n x n).
    pub g: DMatrix<f64>,
    /// Exploration weight.
    pub sigma: f64,
    pub terminal: TerminalCondition,
    pub reference: ReferenceMeasure,
    pub grid: TimeGrid,
}

impl LqModel {
    /// Scalar instance with constant coefficients, deterministic terminal
    /// value and a standard Gaussian prior.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(
        a: f64,
        b: f64,
        c: f64,
        h: f64,
        n: f64,
        r: f64,
        g: f64,
        sigma: f64,
        xi: f64,
        grid: TimeGrid,
    ) -> Self {
        Self {
            state_dim: 1,
            control_dim: 1,
            a: CoefficientPath::scalar(a, &grid),
            b: CoefficientPath::scalar(b, &grid),
            c: CoefficientPath::scalar(c, &grid),
            h: CoefficientPath::scalar(h, &grid),
            n: CoefficientPath::scalar(n, &grid),
            r: CoefficientPath::scalar(r, &grid),
            g: DMatrix::from_element(1, 1, g),
            sigma,
            terminal: TerminalCondition::Deterministic(DVector::from_element(1, xi)),
            reference: ReferenceMeasure::StandardGaussian,
            grid,
        }
    }

    /// `R_t + sigma^2/2 I` at knot `k`.
    pub fn regularized_control_weight(&self, k: usize) -> DMatrix<f64> {
        self.r.at(k) + linalg::identity(self.control_dim) * (0.5 * self.sigma * self.sigma)
    }
}

/// Minimum eigenvalue recorded for one PSD coefficient during validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdCertificate {
    pub which: &'static str,
    pub min_eigenvalue: f64,
}

/// An [`LqModel`] that passed [`validate_model`]: shapes agree, weights are
/// symmetric PSD and `R + sigma^2/2 I` is positive definite on every knot.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    model: LqModel,
    certificates: Vec<PsdCertificate>,
}

impl Deref for ValidatedModel {
    type Target = LqModel;
    fn deref(&self) -> &LqModel {
        &self.model
    }
}

impl ValidatedModel {
    pub fn model(&self) -> &LqModel {
        &self.model
    }

    pub fn into_inner(self) -> LqModel {
        self.model
    }

    pub fn certificates(&self) -> &[PsdCertificate] {
        &self.certificates
    }

    /// The adjoint and the state are deterministic: `C = 0` and `xi` has no
    /// Brownian loading.
    pub fn is_noise_degenerate(&self) -> bool {
        self.c.is_zero() && self.terminal.is_deterministic()
    }
}

fn check_path(
    path: &CoefficientPath,
    name: &'static str,
    shape: (usize, usize),
    n_knots: usize,
) -> Result<()> {
    if path.len() != n_knots {
        return Err(Error::ShapeMismatch(format!(
            "{name} has {} knots, grid has {n_knots}",
            path.len()
        )));
    }
    if path.shape() != shape {
        return Err(Error::ShapeMismatch(format!(
            "{name} is {:?}, expected {shape:?}",
            path.shape()
        )));
    }
    if !path.values().iter().all(linalg::all_finite_mat) {
        return Err(Error::InvalidArgument(format!("{name} has non-finite entries")));
    }
    Ok(())
}

fn symmetrize_checked(m: &DMatrix<f64>, name: &str, knot: usize) -> Result<DMatrix<f64>> {
    let asym = linalg::relative_asymmetry(m);
    if asym > linalg::SYMMETRY_TOL {
        return Err(Error::ShapeMismatch(format!(
            "{name} is not symmetric at knot {knot} (relative asymmetry {asym:e})"
        )));
    }
    Ok(linalg::symmetrize(m))
}

fn psd_path(path: &CoefficientPath, name: &'static str) -> Result<(CoefficientPath, f64)> {
    let mut sym = Vec::with_capacity(path.len());
    let mut floor = f64::INFINITY;
    for (k, m) in path.values().iter().enumerate() {
        let s = symmetrize_checked(m, name, k)?;
        let (ok, lam) = linalg::is_psd(&s);
        if !ok {
            return Err(Error::NonPsd {
                which: name.to_string(),
                knot: k,
                min_eigenvalue: lam,
            });
        }
        floor = floor.min(lam);
        sym.push(s);
    }
    let sym = CoefficientPath {
        rows: path.rows,
        cols: path.cols,
        values: sym,
    };
    Ok((sym, floor))
}

/// Check shapes, symmetry and definiteness of every coefficient.
///
/// Weights whose relative asymmetry is at most `1e-12` are replaced by their
/// symmetric part; larger asymmetry is rejected. Validation is idempotent.
pub fn validate_model(m: LqModel) -> Result<ValidatedModel> {
    if !(m.sigma.is_finite() && m.sigma > 0.0) {
        return Err(Error::NonPositiveSigma(m.sigma));
    }
    TimeGrid::new(m.grid.t_end, m.grid.n_steps)?;
    let (n, p) = (m.state_dim, m.control_dim);
    if n == 0 || p == 0 {
        return Err(Error::ShapeMismatch("dimensions must be positive".into()));
    }
    let knots = m.grid.n_knots();
    check_path(&m.a, "A", (n, n), knots)?;
    check_path(&m.b, "B", (n, p), knots)?;
    check_path(&m.c, "C", (n, n), knots)?;
    check_path(&m.h, "H", (n, n), knots)?;
    check_path(&m.n, "N", (n, n), knots)?;
    check_path(&m.r, "R", (p, p), knots)?;
    if m.g.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "G is {:?}, expected {:?}",
            m.g.shape(),
            (n, n)
        )));
    }
    if !linalg::all_finite_mat(&m.g) {
        return Err(Error::InvalidArgument("G has non-finite entries".into()));
    }

    let (h, h_floor) = psd_path(&m.h, "H")?;
    let (nn, n_floor) = psd_path(&m.n, "N")?;
    let (r, r_floor) = psd_path(&m.r, "R")?;
    let g = symmetrize_checked(&m.g, "G", 0)?;
    let (g_ok, g_floor) = linalg::is_psd(&g);
    if !g_ok {
        return Err(Error::NonPsd {
            which: "G".into(),
            knot: 0,
            min_eigenvalue: g_floor,
        });
    }

    let half_var = 0.5 * m.sigma * m.sigma;
    for (k, rk) in r.values().iter().enumerate() {
        let reg = rk + linalg::identity(p) * half_var;
        if reg.cholesky().is_none() {
            return Err(Error::NonSpd(format!("R + sigma^2/2 I at knot {k}")));
        }
    }

    let (c0, q) = match &m.terminal {
        TerminalCondition::Deterministic(c) => (c, None),
        TerminalCondition::AffineInBrownian { c, q } => (c, Some(q)),
    };
    if c0.len() != n || q.is_some_and(|q| q.len() != n) {
        return Err(Error::ShapeMismatch("terminal condition must have length n".into()));
    }
    if !linalg::all_finite_vec(c0) || q.is_some_and(|q| !linalg::all_finite_vec(q)) {
        return Err(Error::InvalidArgument(
            "terminal condition has non-finite entries".into(),
        ));
    }

    if let ReferenceMeasure::GridPotential { grid, values } = &m.reference {
        if p != 1 {
            return Err(Error::Unsupported(
                "grid potentials require a scalar control".into(),
            ));
        }
        if values.len() != grid.n_points {
            return Err(Error::ShapeMismatch(
                "grid potential needs one value per grid point".into(),
            ));
        }
        if values.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidArgument("grid potential has non-finite values".into()));
        }
    }

    let certificates = vec![
        PsdCertificate { which: "H", min_eigenvalue: h_floor },
        PsdCertificate { which: "N", min_eigenvalue: n_floor },
        PsdCertificate { which: "R", min_eigenvalue: r_floor },
        PsdCertificate { which: "G", min_eigenvalue: g_floor },
    ];
    Ok(ValidatedModel {
        model: LqModel { h, n: nn, r, g, ..m },
        certificates,
    })
}

/// Relative entropy of `N(v, Sigma)` with respect to the standard Gaussian:
/// `1/2 (tr Sigma + |v|^2 - p - ln det Sigma)`.
pub fn kl_gaussian(v: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    let p = v.len();
    if sigma.shape() != (p, p) {
        return Err(Error::ShapeMismatch(format!(
            "covariance is {:?}, mean has length {p}",
            sigma.shape()
        )));
    }
    if linalg::relative_asymmetry(sigma) > linalg::SYMMETRY_TOL {
        return Err(Error::NonSpd("Sigma".into()));
    }
    let log_det = linalg::spd_log_det(sigma, "Sigma")?;
    Ok(0.5 * (sigma.trace() + v.norm_squared() - p as f64 - log_det))
}

/// Trapezoid approximation of `Ent(mu | e^{-U})` on the density's grid.
/// Points where `mu = 0` contribute nothing.
pub fn entropy_grid(mu: &GridDensity, reference: &ReferenceMeasure) -> Result<f64> {
    let integral = mu.integral();
    if (integral - 1.0).abs() > 1e-8 {
        return Err(Error::UnnormalizedDensity { integral });
    }
    let u = reference.potential_on(mu.grid())?;
    let integrand: Vec<f64> = mu
        .values()
        .iter()
        .zip(&u)
        .map(|(&m, &ui)| if m > 0.0 { m * (m.ln() + ui) } else { 0.0 })
        .collect();
    Ok(stats::trapezoid(&integrand, mu.grid().step()))
}

/// Components of the entropy-regularized cost. `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostComponents {
    pub state_cost: f64,
    pub control_cost: f64,
    pub z_cost: f64,
    pub entropy_cost: f64,
    pub endpoint_cost: f64,
}

impl CostComponents {
    pub fn sum(&self) -> f64 {
        self.state_cost + self.control_cost + self.z_cost + self.entropy_cost + self.endpoint_cost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: f64,
    pub components: CostComponents,
    /// 0 for quadrature.
    pub std_error: f64,
    /// 0 for quadrature.
    pub n_paths: usize,
    /// Cost of exploration `1/2 int tr(Sigma R) dt`.
    pub coe: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> TimeGrid {
        TimeGrid::new(1.0, 10).unwrap()
    }

    fn model1() -> LqModel {
        LqModel::scalar(0.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0, 1.0, 1.0, grid())
    }

    #[test]
    fn grid_ends_exactly_at_horizon() {
        let g = TimeGrid::new(0.7, 3).unwrap();
        assert_eq!(g.t(3), 0.7);
        assert!(g.knots().windows(2).all(|w| w[1] > w[0]));
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert!(TimeGrid::new(1.0, 0).is_err());
    }

    #[test]
    fn scalar_model_accepted() {
        assert!(validate_model(model1()).is_ok());
    }

    #[test]
    fn negative_control_weight_rejected() {
        let mut m = model1();
        m.r = CoefficientPath::scalar(-0.1, &m.grid);
        match validate_model(m) {
            Err(Error::NonPsd { which, .. }) => assert_eq!(which, "R"),
            other => panic!("expected NonPsd(R), got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_weight_rejected() {
        let g = grid();
        let mut m = model1();
        m.state_dim = 2;
        m.a = CoefficientPath::constant(DMatrix::zeros(2, 2), &g);
        m.b = CoefficientPath::constant(DMatrix::from_element(2, 1, 1.0), &g);
        m.c = CoefficientPath::constant(DMatrix::zeros(2, 2), &g);
        m.n = CoefficientPath::constant(DMatrix::zeros(2, 2), &g);
        m.g = DMatrix::zeros(2, 2);
        m.terminal = TerminalCondition::Deterministic(DVector::zeros(2));
        m.h = CoefficientPath::constant(
            DMatrix::from_row_slice(2, 2, &[1.0, 1e-3, 0.0, 1.0]),
            &g,
        );
        assert!(matches!(
            validate_model(m.clone()),
            Err(Error::ShapeMismatch(_)) | Err(Error::NonPsd { .. })
        ));
        // Round-off asymmetry is repaired instead.
        m.h = CoefficientPath::constant(
            DMatrix::from_row_slice(2, 2, &[1.0, 1e-14, 0.0, 1.0]),
            &g,
        );
        let v = validate_model(m).unwrap();
        assert_eq!(v.h.at(0)[(0, 1)], v.h.at(0)[(1, 0)]);
    }

    #[test]
    fn sigma_and_shape_errors() {
        let mut m = model1();
        m.sigma = 0.0;
        assert!(matches!(validate_model(m), Err(Error::NonPositiveSigma(_))));
        let mut m = model1();
        m.b = CoefficientPath::constant(DMatrix::zeros(1, 2), &m.grid);
        assert!(matches!(validate_model(m), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn validation_is_idempotent() {
        let v1 = validate_model(model1()).unwrap();
        let v2 = validate_model(v1.clone().into_inner()).unwrap();
        assert_eq!(v1, v2);
    }

    #[test]
    fn piecewise_linear_sampling() {
        let g = TimeGrid::new(1.0, 4).unwrap();
        let p = CoefficientPath::piecewise_linear(
            &[0.0, 1.0],
            &[DMatrix::from_element(1, 1, 0.0), DMatrix::from_element(1, 1, 2.0)],
            &g,
        )
        .unwrap();
        assert!((p.at(1)[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((p.midpoint(1)[(0, 0)] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        let kl = kl_gaussian(&DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
        assert!(kl.abs() < 1e-15);
        let kl = kl_gaussian(&DVector::from_element(1, 1.0), &DMatrix::identity(1, 1)).unwrap();
        assert!((kl - 0.5).abs() < 1e-15);
        assert!(kl_gaussian(&DVector::zeros(1), &DMatrix::from_element(1, 1, -1.0)).is_err());
    }

    /// Independent oracle: composite Simpson quadrature of
    /// `int mu ln(mu / phi)` on [-10, 10].
    fn kl_quadrature_1d(mean: f64, var: f64) -> f64 {
        let n = 200_000;
        let (lo, hi) = (-10.0, 10.0);
        let h = (hi - lo) / n as f64;
        let f = |a: f64| {
            let log_mu = -(a - mean).powi(2) / (2.0 * var) - 0.5 * (2.0 * PI * var).ln();
            let log_phi = -a * a / 2.0 - 0.5 * (2.0 * PI).ln();
            log_mu.exp() * (log_mu - log_phi)
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn kl_matches_quadrature_oracle() {
        let frozen = 0.096_573_590_279_972_6; // oracle value for N(0, 0.5)
        assert!((kl_quadrature_1d(0.0, 0.5) - frozen).abs() < 1e-12);
        let kl = kl_gaussian(&DVector::zeros(1), &DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((kl - frozen).abs() < 1e-12);
        assert!((kl_quadrature_1d(1.0, 1.0) - 0.5).abs() < 1e-12);
    }

    fn gaussian_density(grid: &ControlGrid, var: f64) -> GridDensity {
        let vals = grid.points().map(|a| (-a * a / (2.0 * var)).exp()).collect();
        GridDensity::from_unnormalized(grid.clone(), vals).unwrap()
    }

    #[test]
    fn entropy_grid_examples() {
        let grid = ControlGrid::new(-8.0, 8.0, 16_001).unwrap();
        let e = entropy_grid(&gaussian_density(&grid, 1.0), &ReferenceMeasure::StandardGaussian)
            .unwrap();
        assert!(e.abs() < 1e-6);
        let e = entropy_grid(&gaussian_density(&grid, 0.5), &ReferenceMeasure::StandardGaussian)
            .unwrap();
        assert!((e - 0.096_573_590_279_972_6).abs() < 1e-5);

        let exact = ControlGrid::new(-1.0, 1.0, 2001).unwrap();
        let uniform = GridDensity::from_unnormalized(exact, vec![1.0; 2001]).unwrap();
        let e = entropy_grid(&uniform, &ReferenceMeasure::Flat).unwrap();
        assert!((e + 2f64.ln()).abs() < 1e-12);

        let wide = ControlGrid::new(-2.0, 2.0, 4001).unwrap();
        let vals = wide.points().map(|a| if a.abs() <= 1.0 + 1e-12 { 0.5 } else { 0.0 }).collect();
        let d = GridDensity::from_unnormalized(wide, vals).unwrap();
        let e = entropy_grid(&d, &ReferenceMeasure::Flat).unwrap();
        assert!((e + 2f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn entropy_grid_rejects_unnormalized() {
        let grid = ControlGrid::new(-1.0, 1.0, 11).unwrap();
        let d = GridDensity::raw(grid, vec![1.0; 11]);
        assert!(matches!(
            entropy_grid(&d, &ReferenceMeasure::Flat),
            Err(Error::UnnormalizedDensity { .. })
        ));
    }

    #[test]
    fn entropy_grid_converges_to_closed_form() {
        let exact = 0.096_573_590_279_972_6;
        let errs: Vec<f64> = [1.6f64, 0.8, 0.4, 0.2]
            .iter()
            .map(|&h| {
                let n = (16.0 / h).round() as usize + 1;
                let g = ControlGrid::new(-8.0, 8.0, n).unwrap();
                let e = entropy_grid(&gaussian_density(&g, 0.5), &ReferenceMeasure::StandardGaussian)
                    .unwrap();
                (e - exact).abs()
            })
            .collect();
        // Trapezoid on a Gaussian converges spectrally; once round-off is
        // reached the ratio is meaningless.
        for w in errs.windows(2) {
            assert!(w[1] <= 0.5 * w[0] || w[1] < 1e-13, "{errs:?}");
        }
        assert!(errs[0] > 1e-6, "coarsest grid should show a visible error: {errs:?}");
    }

    fn random_spd(p: usize) -> impl Strategy<Value = DMatrix<f64>> {
        proptest::collection::vec(-1.0f64..1.0, p * p).prop_map(move |xs| {
            let m = DMatrix::from_vec(p, p, xs);
            &m * m.transpose() + DMatrix::identity(p, p) * 0.05
        })
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(
            (v, s) in (1usize..4).prop_flat_map(|p| (
                proptest::collection::vec(-2.0f64..2.0, p).prop_map(DVector::from_vec),
                random_spd(p),
            ))
        ) {
            let kl = kl_gaussian(&v, &linalg::symmetrize(&s)).unwrap();
            prop_assert!(kl >= -1e-12);
        }
    }
}
