use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical layers.
///
/// Input problems (shapes, non-PSD weights, bad grids) and numerical
/// breakdowns (singular resolvents, blow-up, non-convergence) share one enum;
/// [`Error::is_numerical`] separates the two for callers that map them to
/// different exit codes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{which} is not positive semi-definite at knot {knot} (min eigenvalue {min_eigenvalue:e})")]
    NonPsd {
        which: String,
        knot: usize,
        min_eigenvalue: f64,
    },

    #[error("{0} is not symmetric positive definite")]
    NonSpd(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),

    #[error("density integrates to {integral} on the grid, expected 1")]
    UnnormalizedDensity { integral: f64 },

    #[error("I + Theta N is numerically singular at knot {knot} (condition {condition:e})")]
    SingularResolvent { knot: usize, condition: f64 },

    #[error("Riccati solution blew up at knot {knot} (norm {norm:e})")]
    BlowUp { knot: usize, norm: f64 },

    #[error("regression normal matrix ill-conditioned at knot {knot} (condition {condition:e})")]
    IllConditionedRegression { knot: usize, condition: f64 },

    #[error("non-finite value on path {path} at knot {knot}")]
    NonFinite { path: usize, knot: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Gibbs exponent underflows everywhere on the grid")]
    DegenerateMass,

    #[error("fixed-point iteration did not converge in {max_iter} iterations (last L1 gap {gap:e})")]
    NoConvergence { max_iter: usize, gap: f64 },

    #[error("estimated tail mass {tail_mass:e} outside the control grid exceeds 1e-8; widen the grid")]
    GridTooNarrow { tail_mass: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonPsd { .. }
                | Error::NonSpd(_)
                | Error::SingularResolvent { .. }
                | Error::BlowUp { .. }
                | Error::IllConditionedRegression { .. }
                | Error::NonFinite { .. }
                | Error::DegenerateMass
                | Error::NoConvergence { .. }
                | Error::GridTooNarrow { .. }
        )
    }
}
