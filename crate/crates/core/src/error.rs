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
    #[error("{path}: line {line}: malformed row: {reason}")]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("product {0} has no description")]
    MissingDescription(u64),
    #[error("product {0} appears more than once in the description table")]
    DuplicateProduct(u64),
    #[error("instance {id}: relevance {value} outside [1, 3]")]
    RelevanceOutOfRange { id: u64, value: f64 },

    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("index cache: {0}")]
    CacheFormat(String),
    #[error("index cache was built with a different pipeline configuration")]
    CacheStale,

    #[error("query term `{0}` has zero probability under the smoothed model")]
    ZeroProbabilityTerm(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("no token survives the minimum count")]
    EmptyVocabulary,
    #[error("every token is out of vocabulary")]
    AllTokensUnknown,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("document has no in-vocabulary tokens")]
    EmptyDocument,
    #[error("similarity {0} outside [-1, 1]")]
    SimilarityOutOfRange(f64),
    #[error("embedding file: {0}")]
    EmbeddingFormat(String),

    #[error("need at least {needed} training rows, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("sequence is constant; correlation undefined")]
    ConstantSequence,
    #[error("{n} instances cannot be split into {k} folds")]
    TooFewInstances { n: usize, k: usize },
    #[error("probabilities do not form a distribution over 3 classes")]
    NotADistribution,

    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by input files rather than by numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MalformedRow { .. }
                | Error::MissingColumn { .. }
                | Error::MissingDescription(_)
                | Error::DuplicateProduct(_)
                | Error::RelevanceOutOfRange { .. }
                | Error::EmptyCorpus
                | Error::CacheFormat(_)
                | Error::CacheStale
                | Error::EmbeddingFormat(_)
                | Error::ModelFormat(_)
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}
