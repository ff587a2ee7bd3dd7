use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} is (numerically) the zero vector")]
    ZeroColumn(usize),

    #[error("column {index} has norm {norm}, expected 1")]
    NotNormalized { index: usize, norm: f64 },

    #[error("matrix must have at least one row and one column, got {rows}x{cols}")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for {dim} atoms")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("duplicate index {0} in support")]
    DuplicateIndex(usize),

    #[error("sparse signal value at index {0} is zero")]
    ZeroValue(usize),

    #[error("restricted matrix is rank deficient (smallest singular value {sigma_min:e})")]
    RankDeficient { sigma_min: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension {0} exceeds the sign-vector enumeration cap of 25")]
    DimensionTooLarge(usize),

    #[error("k = {k} is out of range (valid: {min}..={max})")]
    KOutOfRange { k: usize, min: usize, max: usize },

    #[error("enumerating {k}-subsets of {d} atoms exceeds the enumeration budget")]
    EnumerationBudgetExceeded { d: usize, k: usize },

    #[error("restricted Gram matrix is singular on support {0:?}")]
    SingularSubset(Vec<usize>),

    #[error("delta = {0} must lie in [0, 1)")]
    DeltaOutOfRange(f64),

    #[error("threshold t = {0} must lie in (0, 1)")]
    TOutOfRange(f64),

    #[error("report lacks {0}")]
    MissingMetric(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
