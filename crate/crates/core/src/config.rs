//! JSON experiment configuration.
//!
//! The schema is documented in `docs/config.md`. Every coefficient may be
//! omitted (zero), a scalar (times the identity pattern), a row-major
//! matrix, or a list of breakpoints interpolated piecewise-linearly onto the
//! time grid.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{
    validate_model, CoefficientPath, LqModel, ReferenceMeasure, TerminalCondition, TimeGrid, ValidatedModel,
};
use crate::policy::ControlGrid;

/// Environment variable overriding `run.seed`.
pub const SEED_ENV: &str = "ERCONTROL_SEED";

/// Path dumps never contain more than this many paths.
pub const MAX_DUMP_PATHS: usize = 100;

/// Where a configuration failed.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    /// Malformed JSON or invalid UTF-8, located by byte offset.
    Syntax { byte_offset: usize, message: String },
    /// Well-formed JSON that does not match the schema.
    Field { path: String, message: String },
    /// The model was rejected by validation.
    Model(Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Syntax { byte_offset, message } => {
                write!(f, "malformed config at byte offset {byte_offset}: {message}")
            }
            ConfigError::Field { path, message } => write!(f, "invalid config field `{path}`: {message}"),
            ConfigError::Model(e) => write!(f, "invalid model: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// A matrix given as a scalar or as row-major rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    /// `x` on the main diagonal, zero elsewhere.
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn build(&self, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>, ConfigError> {
        match self {
            MatrixSpec::Scalar(x) => {
                Ok(DMatrix::from_fn(rows, cols, |i, j| if i == j { *x } else { 0.0 }))
            }
            MatrixSpec::Rows(r) => {
                if r.len() != rows || r.iter().any(|row| row.len() != cols) {
                    return Err(field(name, format!("expected a {rows}x{cols} matrix")));
                }
                Ok(DMatrix::from_fn(rows, cols, |i, j| r[i][j]))
            }
        }
    }
}

/// A time-dependent coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(MatrixSpec),
    Breakpoints { times: Vec<f64>, values: Vec<MatrixSpec> },
}

impl CoefficientSpec {
    fn build(&self, rows: usize, cols: usize, grid: &TimeGrid, name: &str) -> Result<CoefficientPath, ConfigError> {
        match self {
            CoefficientSpec::Constant(m) => Ok(CoefficientPath::constant(m.build(rows, cols, name)?, grid)),
            CoefficientSpec::Breakpoints { times, values } => {
                let mats = values
                    .iter()
                    .map(|v| v.build(rows, cols, name))
                    .collect::<Result<Vec<_>, _>>()?;
                CoefficientPath::piecewise_linear(times, &mats, grid).map_err(|e| field(name, e.to_string()))
            }
        }
    }
}

/// A vector given as a scalar (broadcast) or explicitly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VectorSpec {
    Scalar(f64),
    Values(Vec<f64>),
}

impl VectorSpec {
    fn build(&self, n: usize, name: &str) -> Result<DVector<f64>, ConfigError> {
        match self {
            VectorSpec::Scalar(x) => Ok(DVector::from_element(n, *x)),
            VectorSpec::Values(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            VectorSpec::Values(_) => Err(field(name, format!("expected {n} entries"))),
        }
    }
}

/// Terminal value: a constant, or `constant + brownian * W_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TerminalSpec {
    Affine { constant: VectorSpec, brownian: VectorSpec },
    Constant(VectorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSpec {
    StandardGaussian,
    Flat,
    GridPotential { grid: ControlGrid, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "one")]
    pub state_dim: usize,
    #[serde(default = "one")]
    pub control_dim: usize,
    pub a: Option<CoefficientSpec>,
    pub b: Option<CoefficientSpec>,
    pub c: Option<CoefficientSpec>,
    pub h: Option<CoefficientSpec>,
    pub n: Option<CoefficientSpec>,
    pub r: Option<CoefficientSpec>,
    pub g: Option<MatrixSpec>,
    pub sigma: f64,
    pub terminal: Option<TerminalSpec>,
    #[serde(default = "standard_gaussian")]
    pub reference: ReferenceSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "unit")]
    pub t_end: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { t_end: 1.0, n_steps: default_steps() }
    }
}

/// Settings of `policy --gibbs` and the maximum-principle check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSpec {
    pub knot: usize,
    /// Adjoint value `P` at which the Hamiltonian is frozen.
    pub adjoint: VectorSpec,
    pub n_points: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GibbsSpec {
    fn default() -> Self {
        Self {
            knot: 0,
            adjoint: VectorSpec::Scalar(0.5),
            n_points: 2001,
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Settings of `verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySpec {
    /// Constant mean shift used by the duality and epsilon checks.
    pub shift: VectorSpec,
    pub sigmas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub lln_path_counts: Vec<usize>,
    pub lln_seeds: usize,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            shift: VectorSpec::Scalar(0.1),
            sigmas: vec![0.1, 0.05, 0.025],
            epsilons: vec![0.1, 0.05, 0.025],
            lln_path_counts: vec![100, 1_000, 10_000, 100_000],
            lln_seeds: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub n_paths: usize,
    pub seed: u64,
    /// Paths written to CSV dumps, at most [`MAX_DUMP_PATHS`].
    pub dump_paths: usize,
    pub gibbs: GibbsSpec,
    pub verify: VerifySpec,
}

impl Default for RunSpec {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            seed: 42,
            dump_paths: MAX_DUMP_PATHS,
            gibbs: GibbsSpec::default(),
            verify: VerifySpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_steps() -> usize {
    1000
}
fn standard_gaussian() -> ReferenceSpec {
    ReferenceSpec::StandardGaussian
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn field(path: &str, message: String) -> ConfigError {
    ConfigError::Field { path: path.to_string(), message }
}

/// Byte offset of a 1-based `(line, column)` position reported by the JSON
/// parser.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Parse a configuration from raw bytes.
pub fn parse_config(bytes: &[u8]) -> Result<ExperimentConfig, ConfigError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ConfigError::Syntax {
        byte_offset: e.valid_up_to(),
        message: "invalid UTF-8".into(),
    })?;
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        byte_offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    serde_path_to_error::deserialize(value).map_err(|e| field(&e.path().to_string(), e.inner().to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let bytes = std::fs::read(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&bytes)
}

/// Seed actually used and whether it came from [`SEED_ENV`].
pub fn effective_seed(cfg: &ExperimentConfig, env: Option<&str>) -> Result<(u64, bool), ConfigError> {
    match env {
        None => Ok((cfg.run.seed, false)),
        Some(s) => s
            .trim()
            .parse()
            .map(|v| (v, true))
            .map_err(|_| field(SEED_ENV, format!("not an unsigned integer: {s:?}"))),
    }
}

impl ExperimentConfig {
    pub fn time_grid(&self) -> Result<TimeGrid, ConfigError> {
        TimeGrid::new(self.grid.t_end, self.grid.n_steps).map_err(|e| field("grid", e.to_string()))
    }

    /// Assemble the model described by the config, unvalidated.
    pub fn lq_model(&self) -> Result<LqModel, ConfigError> {
        let s = &self.model;
        let grid = self.time_grid()?;
        let (n, p) = (s.state_dim, s.control_dim);
        let coef = |spec: &Option<CoefficientSpec>, rows: usize, cols: usize, name: &str| match spec {
            Some(c) => c.build(rows, cols, &grid, name),
            None => Ok(CoefficientPath::constant(DMatrix::zeros(rows, cols), &grid)),
        };
        let terminal = match &s.terminal {
            None => TerminalCondition::Deterministic(DVector::zeros(n)),
            Some(TerminalSpec::Constant(c)) => TerminalCondition::Deterministic(c.build(n, "model.terminal")?),
            Some(TerminalSpec::Affine { constant, brownian }) => TerminalCondition::AffineInBrownian {
                c: constant.build(n, "model.terminal.constant")?,
                q: brownian.build(n, "model.terminal.brownian")?,
            },
        };
        let reference = match &s.reference {
            ReferenceSpec::StandardGaussian => ReferenceMeasure::StandardGaussian,
            ReferenceSpec::Flat => ReferenceMeasure::Flat,
            ReferenceSpec::GridPotential { grid, values } => ReferenceMeasure::GridPotential {
                grid: grid.clone(),
                values: values.clone(),
            },
        };
        Ok(LqModel {
            state_dim: n,
            control_dim: p,
            a: coef(&s.a, n, n, "model.a")?,
            b: coef(&s.b, n, p, "model.b")?,
            c: coef(&s.c, n, n, "model.c")?,
            h: coef(&s.h, n, n, "model.h")?,
            n: coef(&s.n, n, n, "model.n")?,
            r: coef(&s.r, p, p, "model.r")?,
            g: match &s.g {
                Some(g) => g.build(n, n, "model.g")?,
                None => DMatrix::zeros(n, n),
            },
            sigma: s.sigma,
            terminal,
            reference,
            grid,
        })
    }

    pub fn validated_model(&self) -> Result<ValidatedModel, ConfigError> {
        validate_model(self.lq_model()?).map_err(ConfigError::Model)
    }

    pub fn adjoint(&self) -> Result<DVector<f64>, ConfigError> {
        self.run.gibbs.adjoint.build(self.model.state_dim, "run.gibbs.adjoint")
    }

    pub fn shift(&self) -> Result<DVector<f64>, ConfigError> {
        self.run.verify.shift.build(self.model.control_dim, "run.verify.shift")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL1: &str = r#"{
        "model": {"b": 1.0, "r": 0.5, "sigma": 1.0, "terminal": 1.0},
        "grid": {"n_steps": 10}
    }"#;

    #[test]
    fn defaults() {
        let cfg = parse_config(br#"{"model": {"sigma": 1.0}}"#).unwrap();
        assert_eq!(cfg.grid.n_steps, 1000);
        assert_eq!(cfg.run.n_paths, 10_000);
        assert_eq!(cfg.run.seed, 42);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        let m = cfg.validated_model().unwrap();
        assert!(m.b.is_zero() && m.terminal.constant_part()[0] == 0.0);
    }

    #[test]
    fn model1_round_trip() {
        let cfg = parse_config(MODEL1.as_bytes()).unwrap();
        let m = cfg.validated_model().unwrap();
        assert_eq!(m.r.at(3)[(0, 0)], 0.5);
        assert_eq!(m.grid.n_steps, 10);
        let again = parse_config(serde_json::to_string(&cfg).unwrap().as_bytes()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn matrices_breakpoints_and_terminal() {
        let cfg = parse_config(
            br#"{"model": {"state_dim": 2, "control_dim": 1,
                 "a": {"times": [0.0, 1.0], "values": [0.0, [[1.0, 2.0], [3.0, 4.0]]]},
                 "b": [[1.0], [0.5]], "h": 2.0, "sigma": 0.5,
                 "terminal": {"constant": [1.0, 2.0], "brownian": 0.3},
                 "reference": "flat"},
                 "grid": {"t_end": 2.0, "n_steps": 4}}"#,
        )
        .unwrap();
        let m = cfg.lq_model().unwrap();
        assert_eq!(m.a.at(2)[(1, 0)], 3.0);
        assert_eq!(m.a.at(1)[(0, 1)], 1.0);
        assert_eq!(m.h.at(0)[(0, 1)], 0.0);
        assert_eq!(m.h.at(0)[(1, 1)], 2.0);
        assert_eq!(m.terminal.brownian_loading()[1], 0.3);
        assert_eq!(m.reference, ReferenceMeasure::Flat);
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let text = b"{\n  \"model\": {\"sigma\": 1.0,,}\n}";
        match parse_config(text) {
            Err(ConfigError::Syntax { byte_offset, .. }) => assert_eq!(byte_offset, 27),
            other => panic!("{other:?}"),
        }
        match parse_config(b"{\"model\": \xff}") {
            Err(ConfigError::Syntax { byte_offset, .. }) => assert_eq!(byte_offset, 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_errors_name_the_field() {
        let e = parse_config(br#"{"model": {"sigma": "one"}}"#).unwrap_err();
        assert!(matches!(&e, ConfigError::Field { path, .. } if path == "model.sigma"), "{e}");
        let e = parse_config(br#"{"model": {"sigma": 1.0}, "run": {"n_path": 5}}"#).unwrap_err();
        assert!(matches!(&e, ConfigError::Field { path, .. } if path == "run.n_path"), "{e}");
        let e = parse_config(br#"{"model": {"sigma": 1.0, "b": [[1.0, 2.0]]}}"#)
            .unwrap()
            .lq_model()
            .unwrap_err();
        assert!(matches!(&e, ConfigError::Field { path, .. } if path == "model.b"), "{e}");
    }

    #[test]
    fn model_validation_errors_pass_through() {
        let cfg = parse_config(br#"{"model": {"sigma": 1.0, "h": -1.0}}"#).unwrap();
        assert!(matches!(cfg.validated_model(), Err(ConfigError::Model(Error::NonPsd { .. }))));
    }

    #[test]
    fn seed_override() {
        let cfg = parse_config(MODEL1.as_bytes()).unwrap();
        assert_eq!(effective_seed(&cfg, None).unwrap(), (42, false));
        assert_eq!(effective_seed(&cfg, Some("7")).unwrap(), (7, true));
        assert!(effective_seed(&cfg, Some("x")).is_err());
    }
}
