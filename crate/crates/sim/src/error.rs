use thiserror::Error;

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown task `{0}` (expected pick-place, pour, open or pivot)")]
    UnknownTask(String),
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("episode not started; call reset")]
    NotStarted,
    #[error("action has non-finite components")]
    InvalidAction,
    #[error("scripted expert failed on {task} with seed {seed}: {reason}")]
    ScriptFailure {
        task: String,
        seed: u64,
        reason: String,
    },
    #[error("reward variant `{0}` needs expert poses and keypoints, which this reference lacks")]
    MissingReference(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] deltaflow_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
