use thiserror::Error;

pub type Result<T> = std::result::Result<T, RlError>;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("replay buffer has {available} usable transitions, need {required}")]
    InsufficientData { available: usize, required: usize },
    #[error("observation has {got} features, expected {expected}")]
    ObservationSize { expected: usize, got: usize },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Sim(#[from] deltaflow_sim::SimError),
    #[error(transparent)]
    Core(#[from] deltaflow_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
