use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure classes, used by the command line to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed or inconsistent input data.
    Schema,
    /// Propensity trimming left nothing to analyse.
    NoOverlap,
    /// The treatment takes a single value where both arms are needed.
    SingleClass,
    /// Rank deficiency or another numerical breakdown.
    Numerical,
    /// File system trouble.
    Io,
    /// Bad parameters supplied by the caller.
    InvalidArgument,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(String),

    #[error("non-finite value at row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),

    #[error("duplicate record for cell {cell_id}, year {year}")]
    DuplicateRecord { cell_id: u64, year: i32 },

    #[error("missing required column `{column}`{}", .file.as_ref().map(|f| format!(" in {f}")).unwrap_or_default())]
    MissingColumn { column: String, file: Option<String> },

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    #[error("degenerate polygon for parcel `{parcel_id}`: {reason}")]
    DegeneratePolygon { parcel_id: String, reason: String },

    #[error("cell {cell_id} has no record for year {year}")]
    MissingCell { cell_id: u64, year: i32 },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("treatment has a single class: {0}")]
    SingleClass(String),

    #[error("no overlap region: all {removed} rows fall outside [{lo}, {hi}]")]
    NoOverlap { lo: f64, hi: f64, removed: usize },

    #[error("rank-deficient design; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unsupported model file: {0}")]
    ModelFormat(String),

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Empty(_)
            | Error::NonFinite { .. }
            | Error::DimensionMismatch(_)
            | Error::DuplicateColumn(_)
            | Error::DuplicateRecord { .. }
            | Error::MissingColumn { .. }
            | Error::Parse { .. }
            | Error::DegeneratePolygon { .. }
            | Error::MissingCell { .. }
            | Error::UnknownFeature(_)
            | Error::ModelFormat(_) => ErrorKind::Schema,
            Error::InvalidArgument(_) => ErrorKind::InvalidArgument,
            Error::SingleClass(_) => ErrorKind::SingleClass,
            Error::NoOverlap { .. } => ErrorKind::NoOverlap,
            Error::RankDeficient { .. } | Error::UndefinedMetric(_) => ErrorKind::Numerical,
            Error::Io { .. } => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
