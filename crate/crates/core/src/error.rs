use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error classes; the CLI maps them to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Reference,
    Io,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("missing metric `{0}`")]
    MissingMetric(String),

    #[error("factsheet incomplete, absent fields: {}", .0.join(", "))]
    Incomplete(Vec<String>),

    #[error("unknown grid `{0}`")]
    UnknownGrid(String),

    #[error("unresolvable location `{0}`")]
    UnresolvableLocation(String),

    #[error("unknown hardware model `{0}`")]
    UnknownHardware(String),

    #[error("{file}: row {row}, column `{column}`: {reason}")]
    DataRow {
        file: String,
        row: usize,
        column: String,
        reason: String,
    },

    #[error("{file}: {reason}")]
    DataFile { file: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid { .. }
            | Error::MissingMetric(_)
            | Error::Incomplete(_)
            | Error::Json { .. } => ErrorKind::Validation,
            Error::UnknownGrid(_)
            | Error::UnresolvableLocation(_)
            | Error::UnknownHardware(_)
            | Error::DataRow { .. }
            | Error::DataFile { .. } => ErrorKind::Reference,
            Error::Io { .. } => ErrorKind::Io,
        }
    }
}
