use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum FavarError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input is not centered: column {column} has mean {mean:.3e} (sd {sd:.3e})")]
    NotCentered { column: usize, mean: f64, sd: f64 },

    #[error("unstable transition system: spectral radius {0:.6} >= 1")]
    Unstable(f64),

    #[error("degenerate draw: {0}")]
    DegenerateDraw(String),

    #[error("signal has zero variance in coordinate {0}; SNR is undefined")]
    ZeroSignal(usize),

    #[error("identification failure: leading loading block has condition number {0:.3e}")]
    Identification(f64),

    #[error("zero residual sum of squares in regression row {0}; BIC is undefined")]
    ZeroResidual(usize),

    #[error("zero reference value: {0}")]
    ZeroReference(&'static str),

    #[error("no lattice point converged ({points} points tried)")]
    NoConvergedFit { points: usize, trace: Vec<String> },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("missing values at {}", .0.join(", "))]
    MissingValues(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, FavarError>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl ToString,
    actual: impl ToString,
) -> FavarError {
    FavarError::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
