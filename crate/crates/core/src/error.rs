use std::path::PathBuf;

use thiserror::Error;

use crate::fetch::FetchError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: empty embedding file")]
    EmptyEmbeddings { path: String },

    #[error("{path}:{line}: malformed header: {reason}")]
    MalformedHeader {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("{path}:{line}: expected {expected} vector components, found {found}")]
    InconsistentLength {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: invalid number {value:?}")]
    InvalidNumber {
        path: String,
        line: usize,
        value: String,
    },

    #[error("cosine similarity undefined for a zero-norm vector")]
    UndefinedSimilarity,

    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("at least two initial keywords are required, got {0}")]
    InsufficientKeywords(usize),

    #[error("duplicate keyword {0:?}")]
    DuplicateKeyword(String),

    #[error("no embedding for keywords: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("url {url:?} is already in the closure")]
    ClosureViolation { url: String },

    #[error("graph integrity: {0}")]
    GraphIntegrity(String),

    #[error("malformed url {0:?}")]
    MalformedUrl(String),

    #[error("training diverged: non-finite loss {0}")]
    TrainingDivergence(f64),

    #[error("frontier exhausted")]
    FrontierExhausted,

    #[error(transparent)]
    Fetch(#[from] FetchError),

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

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
