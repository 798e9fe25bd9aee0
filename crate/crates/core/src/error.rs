use std::path::PathBuf;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
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

    #[error("duplicate record id {id:?} (line {line})")]
    DuplicateId { id: String, line: usize },

    #[error("dictionary: word {word:?} appears more than once ({detail})")]
    DuplicateDictionaryWord { word: String, detail: &'static str },

    #[error("invalid word list {name:?}: {message}")]
    WordList { name: String, message: String },

    #[error("unsupported format: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("stage {stage} failed on record {record_id:?}: {source}")]
    Stage {
        stage: &'static str,
        record_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid mask slots: {0}")]
    MaskSlots(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vocabulary id {id} out of range (|V| = {size})")]
    IdOutOfRange { id: usize, size: usize },

    #[error("non-finite loss in batch {batch}")]
    NonFiniteLoss { batch: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("empty stratum: {0}")]
    EmptyStratum(String),

    #[error("words missing from embedding table: {0:?}")]
    MissingWords(Vec<String>),

    #[error("degenerate spec: every per-word association is identical")]
    DegenerateSpec,

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
