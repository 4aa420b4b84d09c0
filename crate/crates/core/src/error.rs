use thiserror::Error;

use crate::neumann::SolverReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed grid, field or run configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two fields that must share a grid do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A weight with zero total mass where an average is required.
    #[error("degenerate weight: integral of the weight is {0}")]
    DegenerateWeight(f64),

    /// The Luxemburg root could not be bracketed.
    #[error("numerical range error: {0}")]
    NumericalRange(String),

    /// An operation was called outside the domain it is defined on.
    #[error("domain error: {0}")]
    Domain(String),

    /// Input violates an admissibility rule (exponent range, symmetry, PSD, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A quotient whose numerator and denominator both vanish.
    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    /// The solver hit its iteration cap. Carries the best iterate found.
    #[error("solver did not converge: weak residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        residual: f64,
        iterations: usize,
        report: Box<SolverReport>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }

    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::DegenerateWeight(_) => "degenerate_weight",
            Error::NumericalRange(_) => "numerical_range",
            Error::Domain(_) => "domain",
            Error::Validation(_) => "validation",
            Error::UndefinedRatio(_) => "undefined_ratio",
            Error::Estimation(_) => "estimation",
            Error::NotConverged { .. } => "not_converged",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
