use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("ingestion failed: {0}")]
    Ingestion(#[source] std::io::Error),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },

    #[error("invalid venue configuration: {0}")]
    Venues(String),

    #[error("cohort is empty: no user satisfies the transition criteria")]
    EmptyCohort,

    #[error("odds ratio is undefined when every cell is zero")]
    UndefinedOddsRatio,

    #[error("no embedding vectors available for user `{0}`")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model cannot be fitted: {0}")]
    Unfittable(String),

    #[error("feature names do not match the model: {0}")]
    Contract(String),

    #[error("concordance index is undefined: no comparable pairs")]
    UndefinedConcordance,

    #[error("unsupported model format version {0}")]
    FormatVersion(u32),

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
}
