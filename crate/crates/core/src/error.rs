use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("frame {frame}: {visible} visible keypoints, need at least {required}")]
    TooFewVisible {
        frame: usize,
        visible: usize,
        required: usize,
    },
    #[error("invalid length: {0}")]
    InvalidLength(String),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("filter removed every keypoint")]
    EmptyResult,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("illegal phase transition: {0}")]
    IllegalTransition(String),
    #[error("keypoint count mismatch: {robot} robot vs {expert} expert")]
    CountMismatch { robot: usize, expert: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown name `{0}`")]
    UnknownName(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
