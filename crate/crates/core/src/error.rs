use std::path::PathBuf;

use thiserror::Error;

use crate::pipeline::ValidationError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("duplicate node id `{0}`")]
    DuplicateId(String),

    #[error("node `{node}` has unknown kind `{kind}`")]
    UnknownKind { node: String, kind: String },

    #[error("pipeline is invalid: {}", format_validation(.0))]
    InvalidPipeline(Vec<ValidationError>),

    #[error("placement node `{node}` references missing prefab `{prefab}`")]
    MissingPrefab { node: String, prefab: String },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

fn format_validation(errors: &[ValidationError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
