use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {reason}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("split fractions sum to {0}, expected 1")]
    FractionSum(f64),
    #[error("{what}: expected length {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{hypotheses} hypotheses but {references} references")]
    SegmentMismatch { hypotheses: usize, references: usize },
    #[error("non-finite gradient in batch {batch}")]
    NonFiniteGradient { batch: usize },
    #[error("POS backend failed on sample {id}: {reason}")]
    PosBackend { id: String, reason: String },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("tagger and realizer checkpoints were built with different vocabularies")]
    VocabularyMismatch,
    #[error("requested {requested} parallel samples but only {available} are available")]
    NotEnoughData { requested: usize, available: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::FractionSum(_) => "fraction_sum",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::SegmentMismatch { .. } => "segment_mismatch",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::PosBackend { .. } => "pos_backend",
            Error::EmptyInput(_) => "empty_input",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::VocabularyMismatch => "vocabulary_mismatch",
            Error::NotEnoughData { .. } => "not_enough_data",
            Error::Json(_) => "json",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
