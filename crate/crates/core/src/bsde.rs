//! Linear BSDEs with deterministic coefficients.
//!
//! The decoupling field `phi` solves
//!
//! ```text
//! dphi = ((A + Theta H) phi + C (I + Theta N)^-1 eta) dt + eta dW,   phi_T = xi.
//! ```
//!
//! With `xi = c + q W_T` the solution is `phi = alpha + beta W`, `eta = beta`,
//! where `(alpha, beta)` solve backward ODEs. [`solve_affine_backward`] is the
//! shared RK4 integrator for all such ansatz systems; the regression solver
//! is an independent Monte-Carlo check.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{TimeGrid, ValidatedModel};
use crate::riccati::{resolvent, RiccatiSolution};
use crate::simulate::BrownianPaths;
use crate::stats;

/// Coefficients of `beta' = F beta`, `alpha' = F alpha + G beta + f` at one
/// time.
#[derive(Debug, Clone)]
pub struct AffineStage {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub forcing: DVector<f64>,
}

impl AffineStage {
    fn rhs(&self, alpha: &DVector<f64>, beta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.f * alpha + &self.g * beta + &self.forcing, &self.f * beta)
    }
}

/// Deterministic and Brownian parts of an affine-in-`W` process on the knots:
/// `X_k = alpha_k + beta_k W_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePath {
    pub alpha: Vec<DVector<f64>>,
    pub beta: Vec<DVector<f64>>,
}

/// `(phi, eta)` as an [`AffinePath`]: `phi = alpha + beta W`, `eta = beta`.
pub type PhiSolution = AffinePath;

impl AffinePath {
    pub fn value(&self, k: usize, w: f64) -> DVector<f64> {
        &self.alpha[k] + &self.beta[k] * w
    }

    /// Martingale integrand, equal to `beta_k`.
    pub fn loading(&self, k: usize) -> &DVector<f64> {
        &self.beta[k]
    }
}

/// RK4 backward from `(alpha_T, beta_T) = (c, q)`. `knots` has one stage per
/// knot, `mids` one per step.
pub fn solve_affine_backward(
    grid: &TimeGrid,
    knots: &[AffineStage],
    mids: &[AffineStage],
    c: &DVector<f64>,
    q: &DVector<f64>,
) -> Result<AffinePath> {
    let steps = grid.n_steps;
    if knots.len() != steps + 1 || mids.len() != steps {
        return Err(Error::ShapeMismatch("one stage per knot and per step required".into()));
    }
    let h = grid.dt();
    let mut alpha = vec![DVector::zeros(c.len()); steps + 1];
    let mut beta = vec![DVector::zeros(c.len()); steps + 1];
    alpha[steps] = c.clone();
    beta[steps] = q.clone();
    for k in (0..steps).rev() {
        let (a0, b0) = (&alpha[k + 1], &beta[k + 1]);
        let (ka1, kb1) = knots[k + 1].rhs(a0, b0);
        let (ka2, kb2) = mids[k].rhs(&(a0 - &ka1 * (0.5 * h)), &(b0 - &kb1 * (0.5 * h)));
        let (ka3, kb3) = mids[k].rhs(&(a0 - &ka2 * (0.5 * h)), &(b0 - &kb2 * (0.5 * h)));
        let (ka4, kb4) = knots[k].rhs(&(a0 - &ka3 * h), &(b0 - &kb3 * h));
        let a = a0 - (ka1 + ka2 * 2.0 + ka3 * 2.0 + ka4) * (h / 6.0);
        let b = b0 - (kb1 + kb2 * 2.0 + kb3 * 2.0 + kb4) * (h / 6.0);
        if !(linalg::all_finite_vec(&a) && linalg::all_finite_vec(&b)) {
            return Err(Error::NonFinite { path: 0, knot: k });
        }
        alpha[k] = a;
        beta[k] = b;
    }
    Ok(AffinePath { alpha, beta })
}

fn phi_stage(
    theta: &DMatrix<f64>,
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    h: &DMatrix<f64>,
    n: &DMatrix<f64>,
    knot: usize,
) -> Result<AffineStage> {
    Ok(AffineStage {
        f: a + theta * h,
        g: c * resolvent(theta, n, knot)?,
        forcing: DVector::zeros(a.nrows()),
    })
}

/// Solve the decoupling BSDE by the affine ansatz.
pub fn solve_phi(m: &ValidatedModel, th: &RiccatiSolution) -> Result<PhiSolution> {
    if th.grid != m.grid {
        return Err(Error::GridMismatch("Riccati solution and model grids differ".into()));
    }
    let steps = m.grid.n_steps;
    let knots = (0..=steps)
        .map(|k| phi_stage(&th.theta[k], m.a.at(k), m.c.at(k), m.h.at(k), m.n.at(k), k))
        .collect::<Result<Vec<_>>>()?;
    let mids = (0..steps)
        .map(|k| {
            phi_stage(
                &th.midpoint(k),
                &m.a.midpoint(k),
                &m.c.midpoint(k),
                &m.h.midpoint(k),
                &m.n.midpoint(k),
                k,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    solve_affine_backward(
        &m.grid,
        &knots,
        &mids,
        m.terminal.constant_part(),
        &m.terminal.brownian_loading(),
    )
}

/// State `Y = alpha + beta W`, `Z = beta` under a policy whose mean `v_k`
/// is deterministic: `beta' = A beta`, `alpha' = A alpha + C beta + B v`.
pub fn solve_state_for_mean_path(m: &ValidatedModel, v_path: &[DVector<f64>]) -> Result<AffinePath> {
    let steps = m.grid.n_steps;
    if v_path.len() != steps + 1 || v_path.iter().any(|v| v.len() != m.control_dim) {
        return Err(Error::ShapeMismatch("mean path needs one p-vector per knot".into()));
    }
    let stage = |a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, v: DVector<f64>| AffineStage {
        forcing: b * v,
        f: a,
        g: c,
    };
    let knots: Vec<_> = (0..=steps)
        .map(|k| stage(m.a.at(k).clone(), m.b.at(k).clone(), m.c.at(k).clone(), v_path[k].clone()))
        .collect();
    let mids: Vec<_> = (0..steps)
        .map(|k| {
            stage(
                m.a.midpoint(k),
                m.b.midpoint(k),
                m.c.midpoint(k),
                (&v_path[k] + &v_path[k + 1]) * 0.5,
            )
        })
        .collect();
    solve_affine_backward(
        &m.grid,
        &knots,
        &mids,
        m.terminal.constant_part(),
        &m.terminal.brownian_loading(),
    )
}

/// Generator `a_k Y + c_k Z + f0_k` of a linear BSDE, one entry per knot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDriver {
    pub a: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub f0: Vec<DVector<f64>>,
}

impl LinearDriver {
    pub fn zero(dim: usize, grid: &TimeGrid) -> Self {
        let k = grid.n_knots();
        Self {
            a: vec![DMatrix::zeros(dim, dim); k],
            c: vec![DMatrix::zeros(dim, dim); k],
            f0: vec![DVector::zeros(dim); k],
        }
    }

    /// Generator of the decoupling BSDE: `a = A + Theta H`,
    /// `c = C (I + Theta N)^-1`.
    pub fn decoupling(m: &ValidatedModel, th: &RiccatiSolution) -> Result<Self> {
        let mut d = Self::zero(m.state_dim, &m.grid);
        for k in 0..m.grid.n_knots() {
            let s = phi_stage(&th.theta[k], m.a.at(k), m.c.at(k), m.h.at(k), m.n.at(k), k)?;
            d.a[k] = s.f;
            d.c[k] = s.g;
        }
        Ok(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    pub n_paths: usize,
    /// Highest Hermite degree in `W_t / sqrt(t)`.
    pub degree: usize,
    pub seed: u64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            degree: 3,
            seed: 42,
        }
    }
}

/// Normal-matrix condition number above which a regression is rejected.
pub const REGRESSION_COND_MAX: f64 = 1e10;

/// Sampled solution of the regression scheme. `y[k]` and `z[k]` are
/// `n x n_paths`; `z` at the last knot repeats the last step.
#[derive(Debug, Clone)]
pub struct RegressionSolution {
    pub paths: BrownianPaths,
    pub y: Vec<DMatrix<f64>>,
    pub z: Vec<DMatrix<f64>>,
    /// RMS residual of the conditional-expectation fit on each step.
    pub residual_rms: Vec<f64>,
}

impl RegressionSolution {
    pub fn mean_y(&self, k: usize) -> DVector<f64> {
        row_means(&self.y[k])
    }

    pub fn mean_z(&self, k: usize) -> DVector<f64> {
        row_means(&self.z[k])
    }
}

fn row_means(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.nrows(),
        m.row_iter().map(|r| stats::mean(&r.iter().copied().collect::<Vec<_>>())),
    )
}

/// Probabilists' Hermite polynomials `He_0..He_degree` at `x`.
fn hermite_row(x: f64, degree: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if degree >= 1 {
        out[1] = x;
    }
    for j in 1..degree {
        out[j + 1] = x * out[j] - j as f64 * out[j - 1];
    }
}

/// Backward-Euler scheme
///
/// ```text
/// Z_k = E_k[(Y_{k+1} - E_k[Y_{k+1}]) dW_k] / dt,
/// Y_k = E_k[Y_{k+1}] - (a_k E_k[Y_{k+1}] + c_k Z_k + f0_k) dt,
/// ```
///
/// with conditional expectations replaced by least squares on Hermite
/// polynomials of `W_{t_k} / sqrt(t_k)` (constants only at `t = 0`).
pub fn solve_linear_bsde_regression<F>(
    grid: &TimeGrid,
    driver: &LinearDriver,
    terminal: F,
    opts: RegressionOptions,
) -> Result<RegressionSolution>
where
    F: Fn(f64) -> DVector<f64> + Sync,
{
    if opts.n_paths < 1000 {
        return Err(Error::InvalidArgument("regression needs at least 1000 paths".into()));
    }
    if opts.degree == 0 {
        return Err(Error::InvalidArgument("basis degree must be at least 1".into()));
    }
    let knots = grid.n_knots();
    if driver.a.len() != knots || driver.c.len() != knots || driver.f0.len() != knots {
        return Err(Error::ShapeMismatch("driver needs one entry per knot".into()));
    }
    let n = driver.f0[0].len();
    let np = opts.n_paths;
    let steps = grid.n_steps;
    let dt = grid.dt();
    let paths = BrownianPaths::generate(grid, np, opts.seed);

    let terminal_cols: Vec<DVector<f64>> = (0..np)
        .into_par_iter()
        .map(|i| terminal(paths.w(i, steps)))
        .collect();
    if terminal_cols.iter().any(|c| c.len() != n) {
        return Err(Error::ShapeMismatch("terminal sampler returned the wrong length".into()));
    }
    let mut y = vec![DMatrix::zeros(n, np); knots];
    let mut z = vec![DMatrix::zeros(n, np); knots];
    y[steps] = DMatrix::from_columns(&terminal_cols);
    let mut residual_rms = vec![0.0; steps];

    for k in (0..steps).rev() {
        let deg = if k == 0 { 0 } else { opts.degree };
        let scale = if k == 0 { 1.0 } else { grid.t(k).sqrt() };
        let mut basis = DMatrix::zeros(np, deg + 1);
        let mut row = vec![0.0; deg + 1];
        for i in 0..np {
            hermite_row(paths.w(i, k) / scale, deg, &mut row);
            for (j, v) in row.iter().enumerate() {
                basis[(i, j)] = *v;
            }
        }
        let normal = basis.transpose() * &basis / np as f64;
        let (normal_inv, cond) = linalg::inverse_with_condition(&normal).ok_or(
            Error::IllConditionedRegression {
                knot: k,
                condition: f64::INFINITY,
            },
        )?;
        if !(cond <= REGRESSION_COND_MAX) {
            return Err(Error::IllConditionedRegression { knot: k, condition: cond });
        }

        let next = &y[k + 1];
        let project = |targets: &DMatrix<f64>| {
            let coef = &normal_inv * (basis.transpose() * targets) / np as f64;
            &basis * coef
        };
        let ey = project(&next.transpose());
        // Subtracting the fitted mean before multiplying by dW removes the
        // dominant noise of the Z estimator without changing its mean.
        let mut z_targets = DMatrix::zeros(np, n);
        let mut sq = 0.0;
        for i in 0..np {
            let dw = paths.dw(i, k);
            for r in 0..n {
                let e = next[(r, i)] - ey[(i, r)];
                sq += e * e;
                z_targets[(i, r)] = e * dw / dt;
            }
        }
        residual_rms[k] = (sq / (np * n) as f64).sqrt();
        let zk = project(&z_targets).transpose();
        let ey = ey.transpose();

        let drift = &driver.a[k] * &ey + &driver.c[k] * &zk;
        let mut yk = ey - drift * dt;
        for mut col in yk.column_iter_mut() {
            col -= &driver.f0[k] * dt;
        }
        if !linalg::all_finite_mat(&yk) {
            return Err(Error::NonFinite { path: 0, knot: k });
        }
        y[k] = yk;
        z[k] = zk;
    }
    z[steps] = z[steps - 1].clone();
    Ok(RegressionSolution {
        paths,
        y,
        z,
        residual_rms,
    })
}
