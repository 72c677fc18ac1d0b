//! Off-policy deterministic actor-critic (twin critics, n-step replay,
//! scheduled clipped Gaussian exploration) for low-dimensional observations.

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod nn;
pub mod replay;
pub mod schedule;
pub mod train;

pub use agent::{select_action, Agent, UpdateStats};
pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use error::{Result, RlError};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use schedule::LinearSchedule;
pub use train::{evaluate, train, train_with, ActorPolicy, CurvePoint, EvalResult, LearningCurve, RandomPolicy, TrainOutcome};
