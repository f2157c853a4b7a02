use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Record { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("example `{0}` has no target")]
    MissingTarget(String),

    #[error("evaluator failure: {0}")]
    Evaluator(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs (arguments, records, schema) rather
    /// than by a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Record { .. }
                | Error::InvalidArgument(_)
                | Error::InvalidData(_)
                | Error::MissingTarget(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
