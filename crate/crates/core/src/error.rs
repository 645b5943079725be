use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left} vs {right}")]
    Shape { left: String, right: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid label {0}: expected 0 or 1")]
    InvalidLabel(f64),

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("duplicate user id `{0}`")]
    DuplicateUser(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("index {index} out of range for {what} (len {len})")]
    Index { what: &'static str, index: usize, len: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("evaluation protocol violated: {0}")]
    Protocol(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },

    #[error("checkpoint mode mismatch: file holds `{found}`, requested `{requested}`")]
    ModeMismatch { found: String, requested: String },

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
    pub(crate) fn shape(left: impl Into<String>, right: impl Into<String>) -> Self {
        Error::Shape {
            left: left.into(),
            right: right.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 = unreadable or empty input, 3 = malformed file contents,
    /// 4 = inconsistent configuration, 1 = anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::EmptyDataset => 2,
            Error::Record { .. }
            | Error::MissingField { .. }
            | Error::Row { .. }
            | Error::DuplicateUser(_)
            | Error::Format(_)
            | Error::Truncated { .. }
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Config(_)
            | Error::ModeMismatch { .. }
            | Error::InvalidArgument(_)
            | Error::Protocol(_) => 4,
            _ => 1,
        }
    }
}
