use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("duplicate contract id `{id}`: {first} and {second}")]
    DuplicateId {
        id: String,
        first: PathBuf,
        second: PathBuf,
    },

    #[error("unknown vulnerability family `{0}`")]
    UnknownFamily(String),

    #[error("{path}, line {line}: {message}")]
    Csv {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("labelled ids have no matching source: {}", .0.join(", "))]
    MissingIds(Vec<String>),

    #[error("rule file line {line}{}: {message}", .rule.as_ref().map(|r| format!(" (rule {r})")).unwrap_or_default())]
    Rules {
        line: usize,
        rule: Option<String>,
        message: String,
    },

    #[error("feature vector has {got} bits, expected {expected}")]
    Arity { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Data(String),

    #[error("cannot stratify: {0}")]
    Stratify(String),

    #[error("gini of an empty node")]
    EmptyNode,

    #[error("out-of-bag score unavailable: {0}")]
    OutOfBag(String),

    #[error("model format: {0}")]
    Model(String),

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
