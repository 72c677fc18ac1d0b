use serde::{Deserialize, Serialize};

use crate::error::{Result, RlError};
use crate::schedule::LinearSchedule;

/// Trainer hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub soft_update: f64,
    /// Environment steps between gradient updates.
    pub update_every: u64,
    /// Uniform-random steps collected before the first update.
    pub seed_frames: u64,
    /// Steps during which actions are uniform random.
    pub exploration_steps: u64,
    pub stddev_clip: f64,
    /// Also clip the acting noise, not just the target-smoothing and actor
    /// update noise.
    pub clip_exploration: bool,
    pub stddev_schedule: LinearSchedule,
    pub hidden: Vec<usize>,
    pub total_steps: u64,
    pub replay_capacity: usize,
    pub gamma: f64,
    pub nstep: usize,
    /// Steps between evaluation points.
    pub eval_every: u64,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            learning_rate: 1e-4,
            soft_update: 0.01,
            update_every: 2,
            seed_frames: 4000,
            exploration_steps: 2000,
            stddev_clip: 0.3,
            clip_exploration: true,
            stddev_schedule: LinearSchedule::new(1.0, 0.1, 50_000),
            hidden: vec![256, 256],
            total_steps: 100_000,
            replay_capacity: 100_000,
            gamma: 0.99,
            nstep: 3,
            eval_every: 5000,
            eval_episodes: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(RlError::InvalidConfig(msg.to_string()));
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return fail("batch_size must be positive and no larger than replay_capacity");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(self.soft_update > 0.0 && self.soft_update <= 1.0) {
            return fail("soft_update must be in (0, 1]");
        }
        if self.update_every == 0 || self.total_steps == 0 || self.eval_every == 0 {
            return fail("update_every, total_steps and eval_every must be positive");
        }
        if self.eval_episodes == 0 {
            return fail("eval_episodes must be positive");
        }
        if !(self.stddev_clip > 0.0) {
            return fail("stddev_clip must be positive");
        }
        let s = &self.stddev_schedule;
        if !(s.final_value >= 0.0 && s.initial >= s.final_value) {
            return fail("stddev_schedule must satisfy initial >= final >= 0");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return fail("hidden must list at least one positive width");
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) || self.nstep == 0 {
            return fail("gamma must be in (0, 1] and nstep positive");
        }
        Ok(())
    }
}
