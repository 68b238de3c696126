use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate 6D rotation: columns are parallel or near zero")]
    DegenerateRotation,
    #[error("matrix is not a rotation (orthonormality error {0:.3e})")]
    NotARotation(f64),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("window of {span} frames cannot be split into {intervals} integer intervals")]
    NonIntegerStride { span: usize, intervals: usize },
    #[error("frame {index} lacks {needed} frames of history")]
    InsufficientHistory { index: usize, needed: usize },
    #[error("object has no boxes")]
    EmptyObject,
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("blend weights must be nonnegative and sum to 1 (sum = {0})")]
    WeightsNotNormalized(f64),
    #[error("network produced a non-finite output")]
    NonFiniteOutput,
    #[error("decoded goal direction has zero length")]
    ZeroDirection,
    #[error("scene floor has zero area")]
    DegenerateScene,
    #[error("goal is unreachable from start")]
    Unreachable,
    #[error("start cell is blocked")]
    BlockedStart,
    #[error("scene has no target object with a labeled goal")]
    NoGoal,
    #[error("corrupt clip header: {0}")]
    CorruptHeader(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("need at least two frames, got {0}")]
    TooFewFrames(usize),
    #[error("need at least two goals per object, got {0}")]
    TooFewGoals(usize),
    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(&'static str),
    #[error("action was never executed")]
    NotExecuted,
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("replacement object size differs by a factor of {0:.2}")]
    DissimilarObject(f64),
    #[error("unsupported action `{0}`")]
    UnsupportedAction(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
