//! Command-line orchestration: load a config, run one stage of the pipeline
//! and write its artifacts.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 a verification
//! check failed, 3 numerical failure. Artifacts are written sequentially
//! with fixed float formatting, so identical config and seed give
//! byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::bsde::{solve_phi, PhiSolution};
use crate::config::{effective_seed, parse_config, ConfigError, ExperimentConfig, MAX_DUMP_PATHS, SEED_ENV};
use crate::error::Error;
use crate::evaluate::{cost_integrand_profile, cost_monte_carlo, cost_of_exploration, ControlTerm};
use crate::model::ValidatedModel;
use crate::policy::{
    default_control_grid, gibbs_fixed_point, lagrange_beta, lq_hamiltonian_derivative, optimal_policy_rule,
    FixedPointOptions, GridDensity,
};
use crate::riccati::{solve_riccati, RiccatiSolution};
use crate::simulate::{forward_state_check, simulate_hamiltonian_system, SimulatedEnsemble, Variable};
use crate::verify::{self, LlnOptions, StationarityOptions, VerificationReport};

#[derive(Debug, Parser)]
#[command(name = "ercontrol", version, about = "Entropy-regularized backward LQ control toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Experiment config (JSON).
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Riccati solution Theta on the time grid.
    Riccati(Common),
    /// Affine coefficients alpha, beta of the decoupling field.
    Phi(Common),
    /// Simulate the Hamiltonian system; path dumps and per-knot summary.
    Simulate(Common),
    /// Optimal Gaussian policy (covariance and gain).
    Policy {
        #[command(flatten)]
        common: Common,
        /// Also solve the grid Gibbs fixed point at one knot.
        #[arg(long)]
        gibbs: bool,
    },
    /// Monte-Carlo cost of the optimal policy.
    Cost {
        #[command(flatten)]
        common: Common,
        /// Also write per-knot integrand means.
        #[arg(long)]
        dump: bool,
    },
    /// Cost of exploration.
    Coe(Common),
    /// Run one verification check; exit 2 if it fails.
    Verify {
        check: Check,
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline with a manifest of every artifact.
    All(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Check {
    MpInequality,
    Stationarity,
    Duality,
    Degeneration,
    Lln,
    EpsilonRate,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::MpInequality,
        Check::Stationarity,
        Check::Duality,
        Check::Degeneration,
        Check::Lln,
        Check::EpsilonRate,
    ];
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// Input the numerics cannot handle, e.g. an unsupported reference.
    Input { op: &'static str, source: Error },
    Numerical { op: &'static str, source: Error },
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => 3,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Input { op, source } => write!(f, "{op}: {source}"),
            CliError::Numerical { op, source } => write!(f, "numerical failure in {op}: {source}"),
            CliError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

fn at(op: &'static str) -> impl Fn(Error) -> CliError {
    move |source| {
        if source.is_numerical() {
            CliError::Numerical { op, source }
        } else {
            CliError::Input { op, source }
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Fixed 17-significant-digit float formatting.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir, artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(io_err(&path))?;
        self.artifacts.push(Artifact { file: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Io(format!("{name}: {e}"));
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row.into_iter().map(fmt_float)).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        self.write(name, &bytes)
    }
}

fn matrix_columns(prefix: &str, rows: usize, cols: usize) -> Vec<String> {
    (0..rows)
        .flat_map(|i| (0..cols).map(move |j| format!("{prefix}_{i}{j}")))
        .collect()
}

fn row_major(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |i| (0..m.ncols()).map(move |j| m[(i, j)]))
}

/// Config, model and the lazily computed pipeline stages.
struct Session {
    cfg: ExperimentConfig,
    config_sha256: String,
    model: ValidatedModel,
    seed: u64,
    seed_from_env: bool,
    out: Output,
    riccati: Option<RiccatiSolution>,
    phi: Option<PhiSolution>,
    ensemble: Option<SimulatedEnsemble>,
}

impl Session {
    fn open(common: &Common, seed_env: Option<&str>) -> Result<Self, CliError> {
        let bytes = fs::read(&common.config).map_err(|e| {
            CliError::Config(ConfigError::Io(format!("{}: {e}", common.config.display())))
        })?;
        let cfg = parse_config(&bytes).map_err(CliError::Config)?;
        let model = match cfg.validated_model() {
            Ok(m) => m,
            Err(ConfigError::Model(e)) => return Err(at("model::validate_model")(e)),
            Err(e) => return Err(CliError::Config(e)),
        };
        let (seed, seed_from_env) = effective_seed(&cfg, seed_env).map_err(CliError::Config)?;
        let dir = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
        Ok(Self {
            config_sha256: sha256_hex(&bytes),
            cfg,
            model,
            seed,
            seed_from_env,
            out: Output::new(dir)?,
            riccati: None,
            phi: None,
            ensemble: None,
        })
    }

    fn riccati(&mut self) -> Result<&RiccatiSolution, CliError> {
        if self.riccati.is_none() {
            self.riccati = Some(solve_riccati(&self.model).map_err(at("riccati::solve_riccati"))?);
        }
        Ok(self.riccati.as_ref().unwrap())
    }

    fn phi(&mut self) -> Result<&PhiSolution, CliError> {
        if self.phi.is_none() {
            self.riccati()?;
            let th = self.riccati.as_ref().unwrap();
            self.phi = Some(solve_phi(&self.model, th).map_err(at("bsde::solve_phi"))?);
        }
        Ok(self.phi.as_ref().unwrap())
    }

    fn ensemble(&mut self) -> Result<&SimulatedEnsemble, CliError> {
        if self.ensemble.is_none() {
            self.phi()?;
            let ens = simulate_hamiltonian_system(
                &self.model,
                self.riccati.as_ref().unwrap(),
                self.phi.as_ref().unwrap(),
                self.cfg.run.n_paths,
                self.seed,
            )
            .map_err(at("simulate::simulate_hamiltonian_system"))?;
            self.ensemble = Some(ens);
        }
        Ok(self.ensemble.as_ref().unwrap())
    }

    fn knots(&self) -> Vec<f64> {
        self.model.grid.knots()
    }

    fn write_riccati(&mut self) -> Result<(), CliError> {
        let n = self.model.state_dim;
        let t = self.knots();
        let th = self.riccati()?;
        let rows: Vec<Vec<f64>> = th
            .theta
            .iter()
            .zip(&t)
            .map(|(m, &tk)| std::iter::once(tk).chain(row_major(m)).collect())
            .collect();
        let mut header = vec!["t".to_string()];
        header.extend(matrix_columns("theta", n, n));
        self.out.csv("riccati.csv", &header, rows)
    }

    fn write_phi(&mut self) -> Result<(), CliError> {
        let n = self.model.state_dim;
        let t = self.knots();
        let ph = self.phi()?;
        let rows: Vec<Vec<f64>> = (0..t.len())
            .map(|k| {
                std::iter::once(t[k])
                    .chain(ph.alpha[k].iter().copied())
                    .chain(ph.beta[k].iter().copied())
                    .collect()
            })
            .collect();
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("alpha_{i}")));
        header.extend((0..n).map(|i| format!("beta_{i}")));
        self.out.csv("phi.csv", &header, rows)
    }

    fn write_simulation(&mut self) -> Result<(), CliError> {
        let t = self.knots();
        let dump = self.cfg.run.dump_paths.min(MAX_DUMP_PATHS).min(self.cfg.run.n_paths);
        self.ensemble()?;
        let ens = self.ensemble.as_ref().unwrap();
        let mut summary = serde_json::Map::new();
        let mut files = Vec::new();
        for var in Variable::ALL {
            let dim = ens.value(var, 0, 0).len();
            let mut header = vec!["t".to_string()];
            for i in 0..dump {
                if dim == 1 {
                    header.push(format!("path{i}"));
                } else {
                    header.extend((0..dim).map(|j| format!("path{i}_{j}")));
                }
            }
            let rows: Vec<Vec<f64>> = (0..t.len())
                .map(|k| {
                    let mut row = vec![t[k]];
                    for i in 0..dump {
                        row.extend(ens.value(var, i, k).iter().copied());
                    }
                    row
                })
                .collect();
            files.push((format!("paths_{}.csv", var.name()), header, rows));
            let (means, vars) = ens.knot_statistics(var);
            summary.insert(var.name().to_string(), json!({ "mean": means, "variance": vars }));
        }
        let fc = forward_state_check(&self.model, ens).map_err(at("simulate::forward_state_check"))?;
        let n_paths = ens.n_paths();
        for (name, header, rows) in files {
            self.out.csv(&name, &header, rows)?;
        }
        let summary = json!({
            "seed": self.seed,
            "n_paths": n_paths,
            "dumped_paths": dump,
            "t": t,
            "forward_check": { "max_mse": fc.max_mse, "terminal_mse": fc.terminal_mse },
            "variables": summary,
        });
        self.out.json("summary.json", &summary)
    }

    fn write_policy(&mut self) -> Result<(), CliError> {
        let (n, p) = (self.model.state_dim, self.model.control_dim);
        let rule = optimal_policy_rule(&self.model).map_err(at("policy::optimal_policy_rule"))?;
        let t = self.knots();
        let rows: Vec<Vec<f64>> = (0..t.len())
            .map(|k| {
                std::iter::once(t[k])
                    .chain(row_major(&rule.covariance[k]))
                    .chain(row_major(&rule.gain[k]))
                    .collect()
            })
            .collect();
        let mut header = vec!["t".to_string()];
        header.extend(matrix_columns("sigma", p, p));
        header.extend(matrix_columns("k", p, n));
        self.out.csv("policy.csv", &header, rows)
    }

    /// Gibbs fixed point of the LQ Hamiltonian frozen at the configured
    /// knot and adjoint value.
    fn gibbs(&self) -> Result<(GridDensity, Vec<f64>, Vec<f64>, usize), CliError> {
        let g = &self.cfg.run.gibbs;
        if g.knot >= self.model.grid.n_knots() {
            return Err(CliError::Config(ConfigError::Field {
                path: "run.gibbs.knot".into(),
                message: "outside the time grid".into(),
            }));
        }
        let adjoint = self.cfg.adjoint().map_err(CliError::Config)?;
        let spec = lq_hamiltonian_derivative(&self.model, g.knot, &adjoint).map_err(at("policy::lq_hamiltonian_derivative"))?;
        let grid = default_control_grid(&self.model.reference, g.n_points).map_err(at("policy::default_control_grid"))?;
        let opts = FixedPointOptions { damping: g.damping, tol: g.tol, max_iter: g.max_iter };
        let (mu, iters) = gibbs_fixed_point(&spec, &self.model.reference, &grid, self.model.sigma, opts)
            .map_err(at("policy::gibbs_fixed_point"))?;
        let h = spec.evaluate(&grid, mu.mean());
        let u = self.model.reference.potential_on(&grid).map_err(at("model::potential_on"))?;
        Ok((mu, h, u, iters))
    }

    fn write_gibbs(&mut self) -> Result<(), CliError> {
        let (mu, h, u, iters) = self.gibbs()?;
        let report = lagrange_beta(mu.grid(), &h, &u, self.model.sigma).map_err(at("policy::lagrange_beta"))?;
        let rows: Vec<Vec<f64>> = mu.grid().points().zip(mu.values()).map(|(a, m)| vec![a, *m]).collect();
        self.out.csv("gibbs_density.csv", &["a".into(), "mu".into()], rows)?;
        let doc = json!({
            "beta": report.beta,
            "residual_sup": report.residual_sup,
            "iterations": iters,
            "knot": self.cfg.run.gibbs.knot,
            "mean": mu.mean(),
            "variance": mu.variance(),
        });
        self.out.json("lagrange.json", &doc)
    }

    fn write_cost(&mut self, dump: bool) -> Result<(), CliError> {
        let rule = optimal_policy_rule(&self.model).map_err(at("policy::optimal_policy_rule"))?;
        self.ensemble()?;
        let ens = self.ensemble.as_ref().unwrap();
        let report = cost_monte_carlo(&self.model, ens, &rule, ControlTerm::Analytic)
            .map_err(at("evaluate::cost_monte_carlo"))?;
        let profile = if dump {
            Some(cost_integrand_profile(&self.model, ens, &rule).map_err(at("evaluate::cost_integrand_profile"))?)
        } else {
            None
        };
        self.out.json("cost.json", &report)?;
        if let Some(profile) = profile {
            let t = self.knots();
            let header: Vec<String> = ["t", "state", "control", "z", "entropy"].iter().map(|s| s.to_string()).collect();
            let rows = t.iter().zip(profile).map(|(tk, r)| vec![*tk, r[0], r[1], r[2], r[3]]);
            self.out.csv("cost_profile.csv", &header, rows)?;
        }
        Ok(())
    }

    fn write_coe(&mut self) -> Result<(), CliError> {
        let rule = optimal_policy_rule(&self.model).map_err(at("policy::optimal_policy_rule"))?;
        let coe = cost_of_exploration(&self.model, &rule.covariance).map_err(at("evaluate::cost_of_exploration"))?;
        self.out.json("coe.json", &json!({ "coe": coe }))
    }

    fn constant_shift(&self) -> Result<Vec<DVector<f64>>, CliError> {
        let d = self.cfg.shift().map_err(CliError::Config)?;
        Ok(vec![d; self.model.grid.n_knots()])
    }

    fn run_check(&mut self, check: Check) -> Result<VerificationReport, CliError> {
        let mut report = match check {
            Check::MpInequality => {
                let (mu, h, u, _) = self.gibbs()?;
                let (mean, var) = (mu.mean(), mu.variance());
                let sd = var.sqrt();
                let mut tests = Vec::new();
                for shift in [-1.0, -0.5, 0.0, 0.5, 1.0] {
                    for scale in [0.5, 1.0, 2.0] {
                        if shift == 0.0 && scale == 1.0 {
                            continue;
                        }
                        let d = GridDensity::gaussian(mu.grid().clone(), mean + shift * sd, var * scale)
                            .map_err(at("policy::GridDensity::gaussian"))?;
                        tests.push(d);
                    }
                }
                verify::mp_inequality_check(&mu, &h, &u, self.model.sigma, &tests)
                    .map_err(at("verify::mp_inequality_check"))?
                    .to_report()
            }
            Check::Stationarity => {
                let opts = StationarityOptions::default();
                let ens = if let Some(ens) = &self.ensemble {
                    ens.clone()
                } else {
                    self.phi()?;
                    simulate_hamiltonian_system(
                        &self.model,
                        self.riccati.as_ref().unwrap(),
                        self.phi.as_ref().unwrap(),
                        opts.n_paths.min(self.cfg.run.n_paths),
                        self.seed,
                    )
                    .map_err(at("simulate::simulate_hamiltonian_system"))?
                };
                verify::hamiltonian_stationarity_check(&ens, &self.model, opts)
                    .map_err(at("verify::hamiltonian_stationarity_check"))?
                    .to_report()
            }
            Check::Duality => {
                let delta = self.constant_shift()?;
                self.ensemble()?;
                verify::duality_identity_check(&self.model, self.ensemble.as_ref().unwrap(), &delta)
                    .map_err(at("verify::duality_identity_check"))?
                    .to_report()
            }
            Check::Degeneration => verify::degeneration_check(&self.model, &self.cfg.run.verify.sigmas)
                .map_err(at("verify::degeneration_check"))?
                .to_report(),
            Check::Lln => {
                let rule = optimal_policy_rule(&self.model).map_err(at("policy::optimal_policy_rule"))?;
                let mut opts = LlnOptions::new(&self.model, self.seed);
                opts.path_counts = self.cfg.run.verify.lln_path_counts.clone();
                opts.n_seeds = self.cfg.run.verify.lln_seeds;
                verify::lln_exploratory_check(&self.model, &rule, &opts)
                    .map_err(at("verify::lln_exploratory_check"))?
                    .to_report()
            }
            Check::EpsilonRate => {
                let delta = self.constant_shift()?;
                let base = vec![DVector::zeros(self.model.control_dim); self.model.grid.n_knots()];
                verify::epsilon_rate_check(&self.model, &base, &delta, &self.cfg.run.verify.epsilons)
                    .map_err(at("verify::epsilon_rate_check"))?
                    .to_report()
            }
        };
        if let serde_json::Value::Object(d) = &mut report.details {
            d.insert("seed".into(), json!(self.seed));
        }
        self.out.json(&format!("verify_{}.json", report.name), &report)?;
        Ok(report)
    }

    fn run_all(&mut self) -> Result<bool, CliError> {
        self.write_riccati()?;
        self.write_phi()?;
        self.write_simulation()?;
        self.write_policy()?;
        let scalar = self.model.control_dim == 1;
        if scalar {
            self.write_gibbs()?;
        }
        self.write_cost(true)?;
        self.write_coe()?;
        let mut checks = Vec::new();
        let mut skipped = Vec::new();
        for check in Check::ALL {
            if !scalar && matches!(check, Check::MpInequality | Check::Stationarity) {
                skipped.push(json!({ "check": check_name(check), "reason": "needs a scalar control" }));
                continue;
            }
            let r = self.run_check(check)?;
            checks.push(json!({ "name": r.name, "pass": r.pass }));
        }
        let all_pass = checks.iter().all(|c| c["pass"] == json!(true));
        let manifest = json!({
            "tool": "ercontrol",
            "version": env!("CARGO_PKG_VERSION"),
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "seed_source": if self.seed_from_env { SEED_ENV } else { "config" },
            "n_paths": self.cfg.run.n_paths,
            "n_steps": self.model.grid.n_steps,
            "artifacts": self.out.artifacts,
            "checks": checks,
            "skipped_checks": skipped,
            "all_checks_pass": all_pass,
        });
        self.out.json("manifest.json", &manifest)?;
        Ok(all_pass)
    }
}

fn check_name(c: Check) -> String {
    c.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

/// Run a parsed command. `Ok(false)` means a verification check failed.
pub fn run(cli: &Cli, seed_env: Option<&str>) -> Result<bool, CliError> {
    match &cli.command {
        Command::Riccati(c) => Session::open(c, seed_env)?.write_riccati().map(|_| true),
        Command::Phi(c) => Session::open(c, seed_env)?.write_phi().map(|_| true),
        Command::Simulate(c) => Session::open(c, seed_env)?.write_simulation().map(|_| true),
        Command::Policy { common, gibbs } => {
            let mut s = Session::open(common, seed_env)?;
            s.write_policy()?;
            if *gibbs {
                s.write_gibbs()?;
            }
            Ok(true)
        }
        Command::Cost { common, dump } => Session::open(common, seed_env)?.write_cost(*dump).map(|_| true),
        Command::Coe(c) => Session::open(c, seed_env)?.write_coe().map(|_| true),
        Command::Verify { check, common } => Ok(Session::open(common, seed_env)?.run_check(*check)?.pass),
        Command::All(c) => Session::open(c, seed_env)?.run_all(),
    }
}

/// Parse arguments, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let seed_env = std::env::var(SEED_ENV).ok();
    match run(&cli, seed_env.as_deref()) {
        Ok(true) => 0,
        Ok(false) => {
            eprintln!("verification failed");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_seventeen_significant_digits() {
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(-2.5e-12), "-2.4999999999999998e-12");
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(at("riccati::solve_riccati")(Error::BlowUp { knot: 3, norm: 1e9 }).exit_code(), 3);
        assert_eq!(at("policy::optimal_policy_rule")(Error::Unsupported("x".into())).exit_code(), 1);
        let e = at("riccati::solve_riccati")(Error::SingularResolvent { knot: 0, condition: 1e13 });
        assert!(e.to_string().contains("riccati::solve_riccati"));
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["ercontrol", "frobnicate"]), 1);
        assert_eq!(main_with_args(["ercontrol", "verify", "nope", "x.json"]), 1);
        assert_eq!(main_with_args(["ercontrol", "--help"]), 0);
    }

    #[test]
    fn check_names_are_kebab_case() {
        let names: Vec<String> = Check::ALL.iter().map(|c| check_name(*c)).collect();
        assert_eq!(names, ["mp-inequality", "stationarity", "duality", "degeneration", "lln", "epsilon-rate"]);
    }

    #[test]
    fn matrix_headers_are_row_major() {
        assert_eq!(matrix_columns("theta", 2, 2), ["theta_00", "theta_01", "theta_10", "theta_11"]);
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(row_major(&m).collect::<Vec<_>>(), [1.0, 2.0, 3.0, 4.0]);
    }
}
