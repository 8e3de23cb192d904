use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("file {0} is empty")]
    EmptyFile(PathBuf),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-numeric response {token:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: usize,
        token: String,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("invalid bounds for column {column}: lower {lower} must be below upper {upper}")]
    InvalidBounds { column: usize, lower: f64, upper: f64 },

    #[error("status code {code} at row {row}, column {column} is inconsistent with the recorded value")]
    InconsistentStatus { row: usize, column: usize, code: i8 },

    #[error("column {0} has no observed entries")]
    FullyCensoredColumn(usize),

    #[error("invalid truncation region: lower {lower} must be below upper {upper}")]
    InvalidRegion { lower: f64, upper: f64 },

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    #[error("truncation region carries negligible probability mass")]
    DegenerateRegion,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("mean-field fixed point did not converge in {0} sweeps")]
    FixedPointNotConverged(usize),

    #[error("rejection sampler acceptance rate {0:e} is below the supported floor")]
    AcceptanceTooLow(f64),

    #[error("covariance has a non-positive diagonal entry at index {0}")]
    NonPositiveDiagonal(usize),

    #[error("rho = 0 requires a positive definite input covariance")]
    SingularCovariance,

    #[error("precision matrix has non-positive diagonal entry at index {0}")]
    NonPositivePrecisionDiagonal(usize),

    #[error("censored dimension {0} exceeds the quadrature cap of 2; use Monte Carlo mode")]
    QuadratureCap(usize),

    #[error("marginal likelihood for column {0} is not identifiable")]
    NonIdentifiable(usize),

    #[error("path is empty")]
    EmptyPath,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
