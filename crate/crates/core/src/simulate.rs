//! Monte-Carlo simulation of the LQ Hamiltonian system.
//!
//! The adjoint is stepped forward by Euler-Maruyama,
//!
//! ```text
//! dP = -(A'P + H Y) dt - (C'P + N Z) dW,   P_0 = -G (I + Theta_0 G)^-1 phi_0,
//! ```
//!
//! and the state is reconstructed from it:
//! `Y = Theta P + phi`, `Z = (I + Theta N)^-1 (eta - Theta C'P)`,
//! `v = -(R + sigma^2/2 I)^-1 B'P`.
//!
//! Every path draws from its own ChaCha8 stream keyed by `(seed, path)`,
//! so ensembles do not depend on the number of worker threads.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bsde::PhiSolution;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ReferenceMeasure, TimeGrid, ValidatedModel};
use crate::policy::{optimal_policy_rule, GaussianPolicyRule};
use crate::riccati::{resolvent, RiccatiSolution};
use crate::stats;

/// Generator for stream `stream` of master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Brownian motion sampled on a [`TimeGrid`], one path per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPaths {
    pub seed: u64,
    pub n_paths: usize,
    pub grid: TimeGrid,
    /// `W` at every knot, path-major.
    w: Vec<f64>,
}

impl BrownianPaths {
    pub fn generate(grid: &TimeGrid, n_paths: usize, seed: u64) -> Self {
        let knots = grid.n_knots();
        let sd = grid.dt().sqrt();
        let per_path: Vec<Vec<f64>> = (0..n_paths)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(seed, i as u64);
                let mut w = Vec::with_capacity(knots);
                let mut acc = 0.0;
                w.push(acc);
                for _ in 0..grid.n_steps {
                    acc += sd * standard_normal(&mut rng);
                    w.push(acc);
                }
                w
            })
            .collect();
        Self {
            seed,
            n_paths,
            grid: *grid,
            w: per_path.concat(),
        }
    }

    pub fn w(&self, path: usize, k: usize) -> f64 {
        self.w[path * self.grid.n_knots() + k]
    }

    /// Increment `W_{k+1} - W_k`.
    pub fn dw(&self, path: usize, k: usize) -> f64 {
        self.w(path, k + 1) - self.w(path, k)
    }
}

/// Quantities that can be read off an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    W,
    P,
    Y,
    Z,
    V,
}

impl Variable {
    pub const ALL: [Variable; 5] = [Variable::W, Variable::P, Variable::Y, Variable::Z, Variable::V];

    pub fn name(self) -> &'static str {
        match self {
            Variable::W => "W",
            Variable::P => "P",
            Variable::Y => "Y",
            Variable::Z => "Z",
            Variable::V => "v",
        }
    }
}

/// Simulated adjoint paths together with what is needed to reconstruct
/// `Y`, `Z` and `v` from them.
#[derive(Debug, Clone)]
pub struct SimulatedEnsemble {
    pub paths: BrownianPaths,
    state_dim: usize,
    /// `P` path-major, then knot, then component.
    p: Vec<f64>,
    theta: Vec<DMatrix<f64>>,
    phi: PhiSolution,
    /// `(I + Theta N)^-1` per knot.
    resolvent: Vec<DMatrix<f64>>,
    c_transpose: Vec<DMatrix<f64>>,
    gain: Vec<DMatrix<f64>>,
}

impl SimulatedEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.n_paths
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.paths.grid
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.gain[0].nrows()
    }

    pub fn w(&self, path: usize, k: usize) -> f64 {
        self.paths.w(path, k)
    }

    pub fn p(&self, path: usize, k: usize) -> DVector<f64> {
        let n = self.state_dim;
        let start = (path * self.grid().n_knots() + k) * n;
        DVector::from_column_slice(&self.p[start..start + n])
    }

    /// `Theta_k P + phi_k`.
    pub fn y(&self, path: usize, k: usize) -> DVector<f64> {
        &self.theta[k] * self.p(path, k) + self.phi.value(k, self.w(path, k))
    }

    /// `(I + Theta_k N_k)^-1 (eta_k - Theta_k C_k' P)`.
    pub fn z(&self, path: usize, k: usize) -> DVector<f64> {
        z_from(&self.resolvent[k], &self.theta[k], &self.c_transpose[k], &self.phi.beta[k], &self.p(path, k))
    }

    /// Mean of the optimal policy, `K_k P`.
    pub fn v(&self, path: usize, k: usize) -> DVector<f64> {
        &self.gain[k] * self.p(path, k)
    }

    pub fn value(&self, var: Variable, path: usize, k: usize) -> DVector<f64> {
        match var {
            Variable::W => DVector::from_element(1, self.w(path, k)),
            Variable::P => self.p(path, k),
            Variable::Y => self.y(path, k),
            Variable::Z => self.z(path, k),
            Variable::V => self.v(path, k),
        }
    }

    /// Per-knot, per-component sample means and unbiased variances.
    pub fn knot_statistics(&self, var: Variable) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let knots = self.grid().n_knots();
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..knots)
            .into_par_iter()
            .map(|k| {
                let vals: Vec<DVector<f64>> = (0..self.n_paths()).map(|i| self.value(var, i, k)).collect();
                let dim = vals[0].len();
                (0..dim)
                    .map(|j| {
                        let xs: Vec<f64> = vals.iter().map(|v| v[j]).collect();
                        (stats::mean(&xs), stats::variance(&xs))
                    })
                    .unzip()
            })
            .collect();
        rows.into_iter().unzip()
    }
}

fn z_from(
    res: &DMatrix<f64>,
    theta: &DMatrix<f64>,
    ct: &DMatrix<f64>,
    beta: &DVector<f64>,
    p: &DVector<f64>,
) -> DVector<f64> {
    res * (beta - theta * (ct * p))
}

/// Simulate `n_paths` adjoint paths and attach the reconstruction.
pub fn simulate_hamiltonian_system(
    m: &ValidatedModel,
    th: &RiccatiSolution,
    ph: &PhiSolution,
    n_paths: usize,
    seed: u64,
) -> Result<SimulatedEnsemble> {
    if !matches!(m.reference, ReferenceMeasure::StandardGaussian) {
        return Err(Error::Unsupported(
            "the Hamiltonian system is simulated for the standard Gaussian prior only".into(),
        ));
    }
    let grid = m.grid;
    let knots = grid.n_knots();
    if th.grid != grid || th.theta.len() != knots || ph.alpha.len() != knots || ph.beta.len() != knots {
        return Err(Error::GridMismatch("Theta, phi and model must share the grid".into()));
    }
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    let n = m.state_dim;
    let dt = grid.dt();
    let resolvents = (0..knots)
        .map(|k| resolvent(&th.theta[k], m.n.at(k), k))
        .collect::<Result<Vec<_>>>()?;
    let c_transpose: Vec<DMatrix<f64>> = (0..knots).map(|k| m.c.at(k).transpose()).collect();
    let a_transpose: Vec<DMatrix<f64>> = (0..knots).map(|k| m.a.at(k).transpose()).collect();
    let gain = optimal_policy_rule(m)?.gain;

    let init = linalg::identity(n) + &th.theta[0] * &m.g;
    let init_inv = match linalg::inverse_with_condition(&init) {
        Some((inv, cond)) if cond <= crate::riccati::RESOLVENT_COND_MAX => inv,
        other => {
            return Err(Error::SingularResolvent {
                knot: 0,
                condition: other.map_or(f64::INFINITY, |(_, c)| c),
            })
        }
    };
    let p0 = -(&m.g * init_inv * &ph.alpha[0]);

    let paths = BrownianPaths::generate(&grid, n_paths, seed);
    let per_path: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::with_capacity(knots * n);
            let mut p = p0.clone();
            out.extend(p.iter());
            for k in 0..grid.n_steps {
                let w = paths.w(i, k);
                let y = &th.theta[k] * &p + ph.value(k, w);
                let z = z_from(&resolvents[k], &th.theta[k], &c_transpose[k], &ph.beta[k], &p);
                let drift = &a_transpose[k] * &p + m.h.at(k) * y;
                let diffusion = &c_transpose[k] * &p + m.n.at(k) * z;
                p = p - drift * dt - diffusion * paths.dw(i, k);
                if !linalg::all_finite_vec(&p) {
                    return Err(Error::NonFinite { path: i, knot: k + 1 });
                }
                out.extend(p.iter());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(SimulatedEnsemble {
        paths,
        state_dim: n,
        p: per_path.concat(),
        theta: th.theta.clone(),
        phi: ph.clone(),
        resolvent: resolvents,
        c_transpose,
        gain,
    })
}

/// Draw `samples_per_state` actions `a ~ N(rule.mean(k, P), Sigma_k)` for
/// every path at knot `k`. Returns one `p x samples_per_state` matrix per
/// path; path `i` uses stream `i` of `seed`.
pub fn sample_policy_actions(
    ens: &SimulatedEnsemble,
    rule: &GaussianPolicyRule,
    k: usize,
    samples_per_state: usize,
    seed: u64,
) -> Result<Vec<DMatrix<f64>>> {
    if rule.n_knots() != ens.grid().n_knots() {
        return Err(Error::GridMismatch("rule and ensemble grids differ".into()));
    }
    if k >= rule.n_knots() {
        return Err(Error::InvalidArgument(format!("knot {k} is outside the grid")));
    }
    let chol = linalg::cholesky_lower(&rule.covariance[k], &format!("Sigma at knot {k}"))?;
    let p = rule.control_dim();
    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let mean = rule.mean(k, &ens.p(i, k));
            let mut rng = stream_rng(seed, i as u64);
            let mut out = DMatrix::zeros(p, samples_per_state);
            for s in 0..samples_per_state {
                let xi = DVector::from_fn(p, |_, _| standard_normal(&mut rng));
                out.set_column(s, &(&mean + &chol * xi));
            }
            out
        })
        .collect())
}

/// Strong-error diagnostics of the reconstruction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardCheck {
    /// `max_k E|Ytilde_k - Y_k|^2`.
    pub max_mse: f64,
    /// `E|Ytilde_T - xi|^2`.
    pub terminal_mse: f64,
}

/// Step the state equation forward from the reconstructed `Y_0` with the
/// reconstructed `Z` and `v`, `Ytilde_{k+1} = Ytilde_k + (A Ytilde_k + B v_k
/// + C Z_k) dt + Z_k dW_k`, and compare with the reconstruction.
pub fn forward_state_check(m: &ValidatedModel, ens: &SimulatedEnsemble) -> Result<ForwardCheck> {
    if ens.grid() != &m.grid {
        return Err(Error::GridMismatch("ensemble and model grids differ".into()));
    }
    let grid = m.grid;
    let dt = grid.dt();
    let per_path: Vec<(Vec<f64>, f64)> = (0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let mut yt = ens.y(i, 0);
            let mut errs = vec![0.0; grid.n_knots()];
            for k in 0..grid.n_steps {
                let z = ens.z(i, k);
                let drift = m.a.at(k) * &yt + m.b.at(k) * ens.v(i, k) + m.c.at(k) * &z;
                yt += drift * dt + z * ens.paths.dw(i, k);
                errs[k + 1] = (&yt - ens.y(i, k + 1)).norm_squared();
            }
            let xi = m.terminal.sample(ens.w(i, grid.n_steps));
            (errs, (&yt - xi).norm_squared())
        })
        .collect();
    let max_mse = (0..grid.n_knots())
        .map(|k| stats::mean(&per_path.iter().map(|(e, _)| e[k]).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let terminal_mse = stats::mean(&per_path.iter().map(|(_, t)| *t).collect::<Vec<_>>());
    Ok(ForwardCheck { max_mse, terminal_mse })
}
