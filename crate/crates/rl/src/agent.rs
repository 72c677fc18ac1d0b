//! Deterministic actor with twin critics, DrQ-v2 style.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::TrainConfig;
use crate::error::{Result, RlError};
use crate::nn::{Activation, Adam, Grads, Mlp, Real};
use crate::replay::Batch;

/// Gaussian exploration noise clipped to `[-clip, clip]`.
pub fn exploration_noise<R: Rng>(rng: &mut R, stddev: f64, clip: f64) -> f64 {
    if stddev <= 0.0 {
        return 0.0;
    }
    let n: f64 = Normal::new(0.0, stddev).expect("positive stddev").sample(rng);
    n.clamp(-clip, clip)
}

/// Actor output plus clipped exploration noise, clamped to the action box.
/// With `stddev = 0` the mean is returned unchanged.
pub fn select_action<R: Rng>(mean: &[f32], stddev: f64, clip: f64, rng: &mut R) -> Vec<f32> {
    if stddev <= 0.0 {
        return mean.to_vec();
    }
    mean.iter()
        .map(|&m| (m as f64 + exploration_noise(rng, stddev, clip)).clamp(-1.0, 1.0) as f32)
        .collect()
}

/// Mean squared TD error of one critic and its parameter gradient.
pub fn critic_loss_and_grad<F: Real>(critic: &Mlp<F>, input: &Array2<F>, target: &Array1<F>) -> (F, Grads<F>) {
    let cache = critic.forward_cached(input);
    let n = F::from_usize(input.nrows()).expect("batch size");
    let err = &cache.output().column(0) - target;
    let loss = err.mapv(|e| e * e).sum() / n;
    let two = F::one() + F::one();
    let grad = err.mapv(|e| two * e / n).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, &grad, true);
    (loss, grads.expect("requested"))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub critic_loss: f32,
    pub actor_loss: f32,
    pub q_mean: f32,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: Mlp<f32>,
    pub critic1: Mlp<f32>,
    pub critic2: Mlp<f32>,
    pub target1: Mlp<f32>,
    pub target2: Mlp<f32>,
    actor_opt: Adam<f32>,
    critic1_opt: Adam<f32>,
    critic2_opt: Adam<f32>,
    obs_dim: usize,
    act_dim: usize,
    soft_update: f32,
    stddev_clip: f64,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
}

impl Agent {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, config: &TrainConfig, rng: &mut R) -> Self {
        let actor = Mlp::new(&sizes(obs_dim, &config.hidden, act_dim), Activation::Tanh, rng);
        let critic_sizes = sizes(obs_dim + act_dim, &config.hidden, 1);
        let critic1 = Mlp::new(&critic_sizes, Activation::Identity, rng);
        let critic2 = Mlp::new(&critic_sizes, Activation::Identity, rng);
        Self::from_networks(actor, critic1, critic2, config)
    }

    pub fn from_networks(actor: Mlp<f32>, critic1: Mlp<f32>, critic2: Mlp<f32>, config: &TrainConfig) -> Self {
        let lr = config.learning_rate as f32;
        Self {
            obs_dim: actor.input_dim(),
            act_dim: actor.output_dim(),
            actor_opt: Adam::new(&actor, lr),
            critic1_opt: Adam::new(&critic1, lr),
            critic2_opt: Adam::new(&critic2, lr),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            soft_update: config.soft_update as f32,
            stddev_clip: config.stddev_clip,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn greedy(&self, obs: &[f32]) -> Result<Vec<f32>> {
        if obs.len() != self.obs_dim {
            return Err(RlError::ObservationSize { expected: self.obs_dim, got: obs.len() });
        }
        let x = ndarray::aview1(obs).insert_axis(Axis(0)).to_owned();
        Ok(self.actor.forward(&x).row(0).to_vec())
    }

    /// Exploration action; `clip` bounds each noise component.
    pub fn act<R: Rng>(&self, obs: &[f32], stddev: f64, clip: f64, rng: &mut R) -> Result<Vec<f32>> {
        Ok(select_action(&self.greedy(obs)?, stddev, clip, rng))
    }

    fn noisy(&self, mean: &Array2<f32>, stddev: f64, rng: &mut impl Rng) -> Array2<f32> {
        mean.mapv(|m| (m as f64 + exploration_noise(rng, stddev, self.stddev_clip)).clamp(-1.0, 1.0) as f32)
    }

    /// Min-of-twin target-critic values at the next observation.
    pub fn next_value<R: Rng>(&self, next_obs: &Array2<f32>, stddev: f64, rng: &mut R) -> Array1<f32> {
        let next_action = self.noisy(&self.actor.forward(next_obs), stddev, rng);
        let input = concatenate![Axis(1), *next_obs, next_action];
        let q1 = self.target1.forward(&input);
        let q2 = self.target2.forward(&input);
        q1.column(0).iter().zip(q2.column(0)).map(|(a, b)| a.min(*b)).collect()
    }

    /// n-step TD targets `r + discount * min(Q1', Q2')`.
    pub fn critic_target<R: Rng>(&self, batch: &Batch, stddev: f64, rng: &mut R) -> Array1<f32> {
        &batch.reward + &(&batch.discount * &self.next_value(&batch.next_obs, stddev, rng))
    }

    pub fn update_critic<R: Rng>(&mut self, batch: &Batch, stddev: f64, rng: &mut R) -> (f32, f32) {
        let target = self.critic_target(batch, stddev, rng);
        let input = concatenate![Axis(1), batch.obs, batch.action];
        let (l1, g1) = critic_loss_and_grad(&self.critic1, &input, &target);
        let (l2, g2) = critic_loss_and_grad(&self.critic2, &input, &target);
        self.critic1_opt.step(&mut self.critic1, &g1);
        self.critic2_opt.step(&mut self.critic2, &g2);
        (l1 + l2, target.mean().unwrap_or(0.0))
    }

    /// One deterministic policy gradient step on `-min(Q1, Q2)`. Critic
    /// parameters are only read.
    pub fn update_actor<R: Rng>(&mut self, obs: &Array2<f32>, stddev: f64, rng: &mut R) -> f32 {
        let cache = self.actor.forward_cached(obs);
        // clipping is treated as identity in the backward pass
        let action = self.noisy(cache.output(), stddev, rng);
        let input = concatenate![Axis(1), *obs, action];
        let c1 = self.critic1.forward_cached(&input);
        let c2 = self.critic2.forward_cached(&input);
        let n = obs.nrows() as f32;
        let mut g1 = Array2::zeros((obs.nrows(), 1));
        let mut g2 = Array2::zeros((obs.nrows(), 1));
        let mut loss = 0.0;
        for i in 0..obs.nrows() {
            let (q1, q2) = (c1.output()[[i, 0]], c2.output()[[i, 0]]);
            if q1 <= q2 {
                g1[[i, 0]] = -1.0 / n;
                loss -= q1 / n;
            } else {
                g2[[i, 0]] = -1.0 / n;
                loss -= q2 / n;
            }
        }
        let (_, d1) = self.critic1.backward(&c1, &g1, false);
        let (_, d2) = self.critic2.backward(&c2, &g2, false);
        let d_action = (&d1 + &d2).slice(s![.., self.obs_dim..]).to_owned();
        let (grads, _) = self.actor.backward(&cache, &d_action, true);
        self.actor_opt.step(&mut self.actor, &grads.expect("requested"));
        loss
    }

    pub fn soft_update_targets(&mut self) {
        self.target1.soft_update_from(&self.critic1, self.soft_update);
        self.target2.soft_update_from(&self.critic2, self.soft_update);
    }

    /// Critic step, actor step, then target soft update.
    pub fn update<R: Rng>(&mut self, batch: &Batch, stddev: f64, rng: &mut R) -> UpdateStats {
        let (critic_loss, q_mean) = self.update_critic(batch, stddev, rng);
        let actor_loss = self.update_actor(&batch.obs, stddev, rng);
        self.soft_update_targets();
        UpdateStats { critic_loss, actor_loss, q_mean }
    }
}
