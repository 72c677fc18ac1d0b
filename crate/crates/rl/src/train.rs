//! Training loop and greedy evaluation.

use deltaflow_core::rng::{derive_seed, stream};
use deltaflow_sim::{Action, Env, EnvConfig, Observation, Policy};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::config::TrainConfig;
use crate::error::{Result, RlError};
use crate::nn::Mlp;
use crate::replay::{ReplayBuffer, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub success_rate: f64,
    pub mean_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    /// Trapezoidal area under the success curve divided by the step range,
    /// so a curve stuck at 1.0 scores 1.0.
    pub fn auc(&self) -> f64 {
        match self.points.as_slice() {
            [] => 0.0,
            [p] => p.success_rate,
            pts => {
                let area: f64 = pts
                    .windows(2)
                    .map(|w| (w[1].step - w[0].step) as f64 * (w[0].success_rate + w[1].success_rate) / 2.0)
                    .sum();
                area / (pts[pts.len() - 1].step - pts[0].step) as f64
            }
        }
    }

    pub fn final_success(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.success_rate)
    }

    pub fn max_success(&self) -> f64 {
        self.points.iter().map(|p| p.success_rate).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
}

/// Greedy policy over the actor network.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    actor: Mlp<f32>,
}

impl ActorPolicy {
    pub fn new(actor: Mlp<f32>) -> Self {
        Self { actor }
    }

    pub fn actor(&self) -> &Mlp<f32> {
        &self.actor
    }
}

fn features(env: &Env) -> Option<Vec<f32>> {
    env.observation().map(Observation::to_features)
}

impl Policy for ActorPolicy {
    fn act(&mut self, env: &Env) -> Action {
        let Some(obs) = features(env) else { return Action::default() };
        let x = ndarray::Array2::from_shape_vec((1, obs.len()), obs).expect("row vector");
        Action::from_slice(self.actor.forward(&x).row(0).as_slice().expect("contiguous"))
    }
}

/// Uniform random actions from a seeded stream.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: deltaflow_core::rng::StreamRng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: stream(seed, "rl/random-policy", 0) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _env: &Env) -> Action {
        let mut draw = || self.rng.random_range(-1.0..1.0);
        Action::new(draw(), draw(), draw(), draw())
    }
}

/// Greedy rollouts on `episodes` seeded layouts; success means the task
/// finished before the step cap.
pub fn evaluate(env_config: &EnvConfig, policy: &mut dyn Policy, episodes: usize, seed: u64) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(RlError::InvalidConfig("evaluation needs at least one episode".into()));
    }
    let mut config = env_config.clone();
    config.continue_after_success = false;
    let mut env = Env::new(config)?;
    let mut successes = 0;
    let mut total = 0.0;
    for i in 0..episodes {
        let out = env.rollout(policy, derive_seed(seed, "rl/eval", i as u64))?;
        successes += usize::from(out.last().is_some_and(|o| o.success));
        total += out.iter().map(|o| o.reward).sum::<f64>();
    }
    Ok(EvalResult {
        episodes,
        success_rate: successes as f64 / episodes as f64,
        mean_reward: total / episodes as f64,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub curve: LearningCurve,
    pub agent: Agent,
    pub updates: u64,
}

pub fn train(env_config: &EnvConfig, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_with(env_config, config, seed, |_| {})
}

/// [`train`] with a callback at every evaluation point.
pub fn train_with(
    env_config: &EnvConfig,
    config: &TrainConfig,
    seed: u64,
    mut on_eval: impl FnMut(&CurvePoint),
) -> Result<TrainOutcome> {
    config.validate()?;
    let obs_dim = Observation::dim(env_config.lookahead);
    let act_dim = Action::DIM;
    let mut init_rng = stream(seed, "rl/init", 0);
    let mut act_rng = stream(seed, "rl/act", 0);
    let mut replay_rng = stream(seed, "rl/replay", 0);
    let mut update_rng = stream(seed, "rl/update", 0);
    let mut agent = Agent::new(obs_dim, act_dim, config, &mut init_rng);
    let mut buffer = ReplayBuffer::new(config.replay_capacity, obs_dim, act_dim, config.nstep, config.gamma)?;
    let mut env = Env::new(env_config.clone())?;

    let mut points = Vec::new();
    let mut record = |step: u64, agent: &Agent, points: &mut Vec<CurvePoint>| -> Result<()> {
        let mut policy = ActorPolicy::new(agent.actor.clone());
        let r = evaluate(env_config, &mut policy, config.eval_episodes, seed)?;
        let p = CurvePoint { step, success_rate: r.success_rate, mean_reward: r.mean_reward };
        on_eval(&p);
        points.push(p);
        Ok(())
    };

    let mut episode = 0u64;
    let mut obs = env.reset(derive_seed(seed, "rl/episode", episode))?.to_features();
    let mut updates = 0;
    let random_until = config.seed_frames.max(config.exploration_steps);
    for step in 0..config.total_steps {
        if step % config.eval_every == 0 {
            record(step, &agent, &mut points)?;
        }
        let stddev = config.stddev_schedule.value(step);
        let action: Vec<f32> = if step < random_until {
            (0..act_dim).map(|_| act_rng.random_range(-1.0f32..1.0)).collect()
        } else {
            let clip = if config.clip_exploration { config.stddev_clip } else { f64::INFINITY };
            agent.act(&obs, stddev, clip, &mut act_rng)?
        };
        let outcome = env.step(&Action::from_slice(&action))?;
        let next = outcome.observation.to_features();
        let terminal = outcome.success && !env_config.continue_after_success;
        buffer.push(&Transition {
            obs: std::mem::take(&mut obs),
            action,
            reward: outcome.reward as f32,
            next_obs: next.clone(),
            terminal,
            episode_end: outcome.done,
        })?;
        obs = if outcome.done {
            episode += 1;
            env.reset(derive_seed(seed, "rl/episode", episode))?.to_features()
        } else {
            next
        };
        if step >= config.seed_frames && step % config.update_every == 0 {
            let batch = buffer.sample(config.batch_size, &mut replay_rng)?;
            agent.update(&batch, stddev, &mut update_rng);
            updates += 1;
        }
    }
    record(config.total_steps, &agent, &mut points)?;
    Ok(TrainOutcome { curve: LearningCurve { seed, points }, agent, updates })
}
