//! Entropy-regularized cost
//!
//! ```text
//! J = 1/2 E[ int (Y'HY + v'Rv + tr(R Sigma) + Z'NZ + sigma^2 KL(v, Sigma)) dt + Y_0'G Y_0 ]
//! ```
//!
//! for Gaussian policies `N(v_t, Sigma_t)` against the standard Gaussian
//! prior. Time integrals use the composite trapezoid rule on the model grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bsde::solve_state_for_mean_path;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{CostComponents, CostReport, ReferenceMeasure, ValidatedModel};
use crate::policy::GaussianPolicyRule;
use crate::simulate::{standard_normal, stream_rng, SimulatedEnsemble};
use crate::stats;

fn require_standard_gaussian(m: &ValidatedModel) -> Result<()> {
    match m.reference {
        ReferenceMeasure::StandardGaussian => Ok(()),
        _ => Err(Error::Unsupported(
            "cost evaluation needs the standard Gaussian prior".into(),
        )),
    }
}

fn check_covariances(m: &ValidatedModel, sigma_path: &[DMatrix<f64>]) -> Result<()> {
    let p = m.control_dim;
    if sigma_path.len() != m.grid.n_knots() || sigma_path.iter().any(|s| s.shape() != (p, p)) {
        return Err(Error::ShapeMismatch("covariance path needs one p x p matrix per knot".into()));
    }
    if !sigma_path.iter().all(linalg::all_finite_mat) {
        return Err(Error::InvalidArgument("covariance path has non-finite entries".into()));
    }
    Ok(())
}

/// Per-knot `KL(v, Sigma) - |v|^2 / 2 = 1/2 (tr Sigma - p - ln det Sigma)`.
fn kl_offsets(sigma_path: &[DMatrix<f64>]) -> Result<Vec<f64>> {
    sigma_path
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if linalg::relative_asymmetry(s) > linalg::SYMMETRY_TOL {
                return Err(Error::NonSpd(format!("Sigma at knot {k}")));
            }
            let log_det = linalg::spd_log_det(s, &format!("Sigma at knot {k}"))?;
            Ok(0.5 * (s.trace() - s.nrows() as f64 - log_det))
        })
        .collect()
}

/// `1/2 int tr(Sigma_t R_t) dt`.
pub fn cost_of_exploration(m: &ValidatedModel, sigma_path: &[DMatrix<f64>]) -> Result<f64> {
    check_covariances(m, sigma_path)?;
    let tr: Vec<f64> = sigma_path
        .iter()
        .enumerate()
        .map(|(k, s)| (s * m.r.at(k)).trace())
        .collect();
    Ok(0.5 * stats::trapezoid(&tr, m.grid.dt()))
}

/// Exact cost of the policy `N(v_k, Sigma_k)` with a deterministic mean
/// path. The state is `Y = alpha + beta W`, `Z = beta`, so
/// `E[Y'HY] = alpha'H alpha + t beta'H beta` and `E[Z'NZ] = beta'N beta`.
pub fn cost_quadrature(
    m: &ValidatedModel,
    v_path: &[DVector<f64>],
    sigma_path: &[DMatrix<f64>],
) -> Result<CostReport> {
    require_standard_gaussian(m)?;
    check_covariances(m, sigma_path)?;
    let kl0 = kl_offsets(sigma_path)?;
    let state = solve_state_for_mean_path(m, v_path)?;
    let knots = m.grid.n_knots();
    let sigma2 = m.sigma * m.sigma;
    let mut s = vec![0.0; knots];
    let mut c = vec![0.0; knots];
    let mut z = vec![0.0; knots];
    let mut e = vec![0.0; knots];
    for k in 0..knots {
        let (al, be) = (&state.alpha[k], &state.beta[k]);
        let h = m.h.at(k);
        let r = m.r.at(k);
        let v = &v_path[k];
        s[k] = al.dot(&(h * al)) + m.grid.t(k) * be.dot(&(h * be));
        c[k] = v.dot(&(r * v)) + (r * &sigma_path[k]).trace();
        z[k] = be.dot(&(m.n.at(k) * be));
        e[k] = sigma2 * (kl0[k] + 0.5 * v.norm_squared());
    }
    let dt = m.grid.dt();
    let components = CostComponents {
        state_cost: 0.5 * stats::trapezoid(&s, dt),
        control_cost: 0.5 * stats::trapezoid(&c, dt),
        z_cost: 0.5 * stats::trapezoid(&z, dt),
        entropy_cost: 0.5 * stats::trapezoid(&e, dt),
        endpoint_cost: 0.5 * state.alpha[0].dot(&(&m.g * &state.alpha[0])),
    };
    Ok(CostReport {
        total: components.sum(),
        components,
        std_error: 0.0,
        n_paths: 0,
        coe: cost_of_exploration(m, sigma_path)?,
    })
}

/// How the `int a'Ra pi(da)` term is evaluated in Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ControlTerm {
    /// `v'Rv + tr(R Sigma)` in closed form.
    #[default]
    Analytic,
    /// Average of `a'Ra` over sampled actions; path `i` uses stream `i`.
    Sampled { samples_per_state: usize, seed: u64 },
}

fn check_rule(m: &ValidatedModel, ens: &SimulatedEnsemble, rule: &GaussianPolicyRule) -> Result<()> {
    let knots = m.grid.n_knots();
    if ens.grid() != &m.grid || rule.n_knots() != knots {
        return Err(Error::GridMismatch("model, ensemble and rule must share the grid".into()));
    }
    // Y and Z in the ensemble were generated by the optimal mean; only the
    // covariance may differ.
    let optimal = crate::policy::optimal_policy_rule(m)?;
    let same_mean = (0..knots).all(|k| {
        (&rule.gain[k] - &optimal.gain[k]).amax() <= 1e-12 && rule.mean_shift[k].amax() == 0.0
    });
    if !same_mean {
        return Err(Error::Unsupported(
            "Monte-Carlo cost needs the optimal feedback mean; use cost_quadrature for shifted means".into(),
        ));
    }
    Ok(())
}

/// Per-path cost split into components, plus per-knot integrands.
fn path_costs(
    m: &ValidatedModel,
    ens: &SimulatedEnsemble,
    rule: &GaussianPolicyRule,
    control: ControlTerm,
) -> Result<Vec<(CostComponents, Vec<[f64; 4]>)>> {
    require_standard_gaussian(m)?;
    check_rule(m, ens, rule)?;
    check_covariances(m, &rule.covariance)?;
    let kl0 = kl_offsets(&rule.covariance)?;
    let factors = match control {
        ControlTerm::Sampled { .. } => Some(rule.covariance_factors()?),
        ControlTerm::Analytic => None,
    };
    let knots = m.grid.n_knots();
    let dt = m.grid.dt();
    let sigma2 = m.sigma * m.sigma;
    let trace: Vec<f64> = (0..knots).map(|k| (m.r.at(k) * &rule.covariance[k]).trace()).collect();

    Ok((0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let mut rng = match control {
                ControlTerm::Sampled { seed, .. } => Some(stream_rng(seed, i as u64)),
                ControlTerm::Analytic => None,
            };
            let mut rows = Vec::with_capacity(knots);
            for k in 0..knots {
                let y = ens.y(i, k);
                let z = ens.z(i, k);
                let v = rule.mean(k, &ens.p(i, k));
                let r = m.r.at(k);
                let control_value = match (control, &factors, rng.as_mut()) {
                    (ControlTerm::Sampled { samples_per_state, .. }, Some(l), Some(rng)) => {
                        let p = v.len();
                        let acc: f64 = (0..samples_per_state)
                            .map(|_| {
                                let a = &v + &l[k] * DVector::from_fn(p, |_, _| standard_normal(rng));
                                a.dot(&(r * &a))
                            })
                            .sum();
                        acc / samples_per_state.max(1) as f64
                    }
                    _ => v.dot(&(r * &v)) + trace[k],
                };
                rows.push([
                    y.dot(&(m.h.at(k) * &y)),
                    control_value,
                    z.dot(&(m.n.at(k) * &z)),
                    sigma2 * (kl0[k] + 0.5 * v.norm_squared()),
                ]);
            }
            let col = |j: usize| 0.5 * stats::trapezoid(&rows.iter().map(|r| r[j]).collect::<Vec<_>>(), dt);
            let y0 = ens.y(i, 0);
            let comp = CostComponents {
                state_cost: col(0),
                control_cost: col(1),
                z_cost: col(2),
                entropy_cost: col(3),
                endpoint_cost: 0.5 * y0.dot(&(&m.g * &y0)),
            };
            (comp, rows)
        })
        .collect())
}

/// Monte-Carlo cost of the optimal feedback rule (possibly with rescaled
/// covariance) along a simulated ensemble.
pub fn cost_monte_carlo(
    m: &ValidatedModel,
    ens: &SimulatedEnsemble,
    rule: &GaussianPolicyRule,
    control: ControlTerm,
) -> Result<CostReport> {
    let per_path = path_costs(m, ens, rule, control)?;
    let pick = |f: fn(&CostComponents) -> f64| -> Vec<f64> { per_path.iter().map(|(c, _)| f(c)).collect() };
    let components = CostComponents {
        state_cost: stats::mean(&pick(|c| c.state_cost)),
        control_cost: stats::mean(&pick(|c| c.control_cost)),
        z_cost: stats::mean(&pick(|c| c.z_cost)),
        entropy_cost: stats::mean(&pick(|c| c.entropy_cost)),
        endpoint_cost: stats::mean(&pick(|c| c.endpoint_cost)),
    };
    let totals = pick(|c| c.sum());
    Ok(CostReport {
        total: components.sum(),
        components,
        std_error: stats::std_error(&totals),
        n_paths: ens.n_paths(),
        coe: cost_of_exploration(m, &rule.covariance)?,
    })
}

/// Per-knot path means of the running integrands, each already halved:
/// `[state, control, z, entropy]`.
pub fn cost_integrand_profile(
    m: &ValidatedModel,
    ens: &SimulatedEnsemble,
    rule: &GaussianPolicyRule,
) -> Result<Vec<[f64; 4]>> {
    let per_path = path_costs(m, ens, rule, ControlTerm::Analytic)?;
    Ok((0..m.grid.n_knots())
        .map(|k| {
            let mut out = [0.0; 4];
            for (j, o) in out.iter_mut().enumerate() {
                let xs: Vec<f64> = per_path.iter().map(|(_, rows)| rows[k][j]).collect();
                *o = 0.5 * stats::mean(&xs);
            }
            out
        })
        .collect())
}

/// Paired estimate of `J(perturbed) - J(optimal)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostGap {
    pub mean: f64,
    pub std_error: f64,
}

/// Cost gap of the perturbed policy `N(v_t + delta_t, s Sigma_t)` against
/// the optimal `N(v_t, Sigma_t)`, evaluated on the same paths. A
/// deterministic shift moves the state by the deterministic `V` solving
/// `dV/dt = A V + B delta`, `V_T = 0`, and leaves `Z` unchanged, so the
/// per-path gap is exact given the simulated `Y` and `v`.
pub fn perturbation_cost_gap(
    m: &ValidatedModel,
    ens: &SimulatedEnsemble,
    delta: &[DVector<f64>],
    cov_scale: f64,
) -> Result<CostGap> {
    require_standard_gaussian(m)?;
    let knots = m.grid.n_knots();
    if ens.grid() != &m.grid {
        return Err(Error::GridMismatch("ensemble and model grids differ".into()));
    }
    if delta.len() != knots || delta.iter().any(|d| d.len() != m.control_dim) {
        return Err(Error::ShapeMismatch("shift needs one p-vector per knot".into()));
    }
    let rule = crate::policy::optimal_policy_rule(m)?;
    let scaled = rule.clone().scale_covariance(cov_scale)?;
    let kl0 = kl_offsets(&rule.covariance)?;
    let kl_s = kl_offsets(&scaled.covariance)?;
    let zero = vec![DVector::zeros(m.control_dim); knots];
    let base = solve_state_for_mean_path(m, &zero)?;
    let shifted = solve_state_for_mean_path(m, delta)?;
    let v_var: Vec<DVector<f64>> = shifted.alpha.iter().zip(&base.alpha).map(|(a, b)| a - b).collect();
    let dt = m.grid.dt();
    let sigma2 = m.sigma * m.sigma;
    // Path-independent part of the running integrand.
    let fixed: Vec<f64> = (0..knots)
        .map(|k| {
            let (d, vv, r, h) = (&delta[k], &v_var[k], m.r.at(k), m.h.at(k));
            vv.dot(&(h * vv))
                + d.dot(&(r * d))
                + (cov_scale - 1.0) * (r * &rule.covariance[k]).trace()
                + sigma2 * (0.5 * d.norm_squared() + kl_s[k] - kl0[k])
        })
        .collect();
    let gv0 = &m.g * &v_var[0];
    let gaps: Vec<f64> = (0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let rows: Vec<f64> = (0..knots)
                .map(|k| {
                    let y = ens.y(i, k);
                    let v = rule.mean(k, &ens.p(i, k));
                    let r = m.r.at(k);
                    fixed[k] + 2.0 * y.dot(&(m.h.at(k) * &v_var[k])) + 2.0 * v.dot(&(r * &delta[k]))
                        + sigma2 * v.dot(&delta[k])
                })
                .collect();
            0.5 * stats::trapezoid(&rows, dt) + 0.5 * (2.0 * ens.y(i, 0).dot(&gv0) + v_var[0].dot(&gv0))
        })
        .collect();
    Ok(CostGap {
        mean: stats::mean(&gaps),
        std_error: stats::std_error(&gaps),
    })
}
