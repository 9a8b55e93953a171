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

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid record {id}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("duplicate prompt id {0}")]
    DuplicateId(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("unknown prompt id {0}")]
    UnknownPrompt(String),

    #[error("no informative pairs (delta {delta}, {attempts} candidate draws)")]
    NoInformativePairs { delta: f64, attempts: usize },

    #[error("prompt {id} has no embedding but the model expects precomputed embeddings")]
    MissingEmbedding { id: String },

    #[error("prompt {id}: embedding has length {found}, expected {expected}")]
    EmbeddingDim {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("degenerate ranking: every value is tied in at least one input")]
    DegenerateRanking,

    #[error("{0}")]
    InvalidInput(String),

    #[error("unsupported model format version {0}")]
    ModelVersion(u32),

    #[error("policy {policy}: {source}")]
    Policy {
        policy: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
