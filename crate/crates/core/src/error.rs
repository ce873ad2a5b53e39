use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OscError>;

/// Every failure the toolkit can report.
///
/// [`OscError::name`] gives the stable variant name that the command line
/// prints in its single-line diagnostics.
#[derive(Debug, Error)]
pub enum OscError {
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("label vector has length {found}, expected {expected}")]
    LabelLengthMismatch { expected: usize, found: usize },

    #[error("matrix is {rows}x{cols}; at least 2x2 is required")]
    TooSmall { rows: usize, cols: usize },

    #[error("rows with zero variance: {0:?}")]
    ConstantRow(Vec<usize>),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("eigenvalue iteration did not converge for index {0}")]
    NoConvergence(usize),

    #[error("eigenvalues sum to zero")]
    AllZero,

    #[error("invalid threshold {0}; expected a value in (0, 1]")]
    InvalidThreshold(f64),

    #[error("{points} points cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },

    #[error("label sequences have lengths {left} and {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("label sequence is empty")]
    Empty,

    #[error("at least {needed} samples are required, got {found}")]
    TooFew { needed: usize, found: usize },

    #[error("subspace dimensions sum to {total}, exceeding ambient dimension {p}")]
    InfeasibleDims { total: usize, p: usize },

    #[error("dataset has {available} categories, {requested} requested")]
    NotEnoughCategories { available: usize, requested: usize },

    #[error("dataset `{0}` has no ground-truth labels")]
    MissingLabels(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl OscError {
    pub fn name(&self) -> &'static str {
        match self {
            OscError::NonFinite { .. } => "NonFinite",
            OscError::LabelLengthMismatch { .. } => "LabelLengthMismatch",
            OscError::TooSmall { .. } => "TooSmall",
            OscError::ConstantRow(_) => "ConstantRow",
            OscError::NotSymmetric(_) => "NotSymmetric",
            OscError::NotSquare { .. } => "NotSquare",
            OscError::NoConvergence(_) => "NoConvergence",
            OscError::AllZero => "AllZero",
            OscError::InvalidThreshold(_) => "InvalidThreshold",
            OscError::TooFewPoints { .. } => "TooFewPoints",
            OscError::LengthMismatch { .. } => "LengthMismatch",
            OscError::Empty => "Empty",
            OscError::TooFew { .. } => "TooFew",
            OscError::InfeasibleDims { .. } => "InfeasibleDims",
            OscError::NotEnoughCategories { .. } => "NotEnoughCategories",
            OscError::MissingLabels(_) => "MissingLabels",
            OscError::InvalidConfig(_) => "InvalidConfig",
            OscError::Parse { .. } => "ParseError",
            OscError::Io { .. } => "IoError",
            OscError::Json(_) => "JsonError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OscError::Io {
            path: path.into(),
            source,
        }
    }
}
