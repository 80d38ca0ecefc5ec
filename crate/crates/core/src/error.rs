use thiserror::Error;

/// Errors produced across the library.
///
/// The variants are grouped by what went wrong rather than by module, so a
/// caller can map them onto exit codes without knowing which stage failed.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model is not stationary (companion spectral radius {spectral_radius})")]
    Stationarity { spectral_radius: f64 },

    #[error("innovation covariance is not positive definite: {0}")]
    Covariance(String),

    #[error("covariance series did not converge after {terms} terms (tail bound {error_bound:e})")]
    Convergence { terms: usize, error_bound: f64 },

    #[error("singular or ill-conditioned matrix (condition number {condition:e}): {context}")]
    Singularity { condition: f64, context: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unknown variable: {0}")]
    Key(String),

    #[error("series too short: {0}")]
    Length(String),

    #[error("invalid condition set: {0}")]
    Condition(String),

    #[error("not enough degrees of freedom: {0}")]
    DegreesOfFreedom(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable tag used in error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "DimensionError",
            Error::Stationarity { .. } => "StationarityError",
            Error::Covariance(_) => "CovarianceError",
            Error::Convergence { .. } => "ConvergenceError",
            Error::Singularity { .. } => "SingularityError",
            Error::Degenerate(_) => "DegenerateError",
            Error::Key(_) => "KeyError",
            Error::Length(_) => "LengthError",
            Error::Condition(_) => "ConditionError",
            Error::DegreesOfFreedom(_) => "DegreesOfFreedomError",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
