use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between reading a file and writing a table.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("unable to read '{path}': {source}")]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header mismatch: expected columns {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("degenerate partition: feature '{0}' has zero variance")]
    DegeneratePartition(&'static str),
    #[error("empty partition: no complete observations to train on")]
    EmptyPartition,
    #[error("need at least {k} distinct points, found {distinct}")]
    TooFewDistinctPoints { k: usize, distinct: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("elbow curve needs at least 3 points, found {0}")]
    CurveTooShort(usize),
    #[error("need at least 2 points for a sample covariance, found {0}")]
    TooFewPoints(usize),
    #[error("matrix is not invertible even with ridge {0:e}")]
    NotInvertible(f64),
    #[error("observation is missing feature '{0}'")]
    MissingFeature(&'static str),
    #[error("scored observations belong to model {found}, not {expected}")]
    ModelMismatch { expected: String, found: String },
    #[error("center set is empty")]
    EmptyCenterSet,
    #[error("no minutes fall in the requested category")]
    EmptyCategory,
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown timezone '{0}'")]
    UnknownTimezone(String),
    #[error("unsupported model format version {0}")]
    UnsupportedFormat(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
