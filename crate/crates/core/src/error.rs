use thiserror::Error;

/// Errors raised anywhere in the evaluation pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid world realization: {0}")]
    InvalidWorld(String),

    #[error("absolute continuity violated: proposal assigns zero mass to {0}")]
    AbsoluteContinuity(String),

    #[error("strata do not form a partition: {0}")]
    NotAPartition(String),

    #[error("horizon mismatch: world has horizon {world}, rollout requested {requested}")]
    HorizonMismatch { world: u32, requested: u32 },

    #[error("duplicate policy id `{0}`")]
    DuplicateId(String),

    #[error("unknown policy id `{0}`")]
    UnknownId(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invalid metric vector: {0}")]
    InvalidMetrics(String),

    #[error("empty frontier: nothing to select")]
    EmptyFrontier,

    #[error("serialization failed: {0}")]
    Serialization(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
