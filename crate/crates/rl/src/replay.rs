//! FIFO replay with n-step returns computed at sample time.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Result, RlError};

/// One environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f32>,
    pub action: Vec<f32>,
    pub reward: f32,
    pub next_obs: Vec<f32>,
    /// True terminal: no bootstrap past this transition.
    pub terminal: bool,
    /// Last transition of its episode (terminal or time limit).
    pub episode_end: bool,
}

/// An n-step return starting at one stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct NStep {
    /// `sum_{i<m} gamma^i r_{t+i}` for the `m <= n` steps actually taken.
    pub reward: f64,
    /// `gamma^m`, or 0 after a true terminal.
    pub discount: f64,
    /// Logical index of the last transition in the chain.
    pub last: usize,
    pub steps: usize,
}

/// A sampled minibatch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f32>,
    pub action: Array2<f32>,
    pub reward: Array1<f32>,
    pub discount: Array1<f32>,
    pub next_obs: Array2<f32>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    nstep: usize,
    gamma: f64,
    obs: Vec<f32>,
    next_obs: Vec<f32>,
    action: Vec<f32>,
    reward: Vec<f32>,
    terminal: Vec<bool>,
    episode_end: Vec<bool>,
    len: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize, nstep: usize, gamma: f64) -> Result<Self> {
        if capacity == 0 || nstep == 0 || !(0.0..=1.0).contains(&gamma) {
            return Err(RlError::InvalidConfig(format!(
                "replay needs capacity > 0, nstep > 0 and gamma in [0, 1] (got {capacity}, {nstep}, {gamma})"
            )));
        }
        Ok(Self {
            capacity,
            obs_dim,
            act_dim,
            nstep,
            gamma,
            obs: vec![0.0; capacity * obs_dim],
            next_obs: vec![0.0; capacity * obs_dim],
            action: vec![0.0; capacity * act_dim],
            reward: vec![0.0; capacity],
            terminal: vec![false; capacity],
            episode_end: vec![false; capacity],
            len: 0,
            head: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim || t.next_obs.len() != self.obs_dim {
            return Err(RlError::ObservationSize { expected: self.obs_dim, got: t.obs.len() });
        }
        if t.action.len() != self.act_dim {
            return Err(RlError::InvalidConfig(format!(
                "action has {} components, expected {}",
                t.action.len(),
                self.act_dim
            )));
        }
        let i = self.head;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.obs);
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.next_obs);
        self.action[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
        self.reward[i] = t.reward;
        self.terminal[i] = t.terminal;
        self.episode_end[i] = t.episode_end;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Physical slot of logical index `k` (0 = oldest).
    fn slot(&self, k: usize) -> usize {
        let oldest = if self.len < self.capacity { 0 } else { self.head };
        (oldest + k) % self.capacity
    }

    /// The n-step return from logical index `k`, or `None` when the chain
    /// would run into transitions not yet stored.
    pub fn nstep_at(&self, k: usize) -> Option<NStep> {
        let mut reward = 0.0;
        let mut discount = 1.0;
        for m in 0..self.nstep {
            let j = k + m;
            if j >= self.len {
                return None;
            }
            let s = self.slot(j);
            reward += discount * self.reward[s] as f64;
            discount *= self.gamma;
            if self.terminal[s] {
                return Some(NStep { reward, discount: 0.0, last: j, steps: m + 1 });
            }
            if self.episode_end[s] || m + 1 == self.nstep {
                return Some(NStep { reward, discount, last: j, steps: m + 1 });
            }
        }
        unreachable!("loop returns by the final step")
    }

    pub fn next_obs(&self, k: usize) -> &[f32] {
        let s = self.slot(k);
        &self.next_obs[s * self.obs_dim..(s + 1) * self.obs_dim]
    }

    pub fn obs(&self, k: usize) -> &[f32] {
        let s = self.slot(k);
        &self.obs[s * self.obs_dim..(s + 1) * self.obs_dim]
    }

    pub fn action(&self, k: usize) -> &[f32] {
        let s = self.slot(k);
        &self.action[s * self.act_dim..(s + 1) * self.act_dim]
    }

    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        if self.len < batch.max(self.nstep) {
            return Err(RlError::InsufficientData { available: self.len, required: batch.max(self.nstep) });
        }
        let mut out = Batch {
            obs: Array2::zeros((batch, self.obs_dim)),
            action: Array2::zeros((batch, self.act_dim)),
            reward: Array1::zeros(batch),
            discount: Array1::zeros(batch),
            next_obs: Array2::zeros((batch, self.obs_dim)),
        };
        let mut filled = 0;
        let mut attempts = 0;
        while filled < batch {
            attempts += 1;
            if attempts > 100 * batch {
                return Err(RlError::InsufficientData { available: filled, required: batch });
            }
            let k = rng.random_range(0..self.len);
            let Some(n) = self.nstep_at(k) else { continue };
            out.obs.row_mut(filled).assign(&ndarray::aview1(self.obs(k)));
            out.action.row_mut(filled).assign(&ndarray::aview1(self.action(k)));
            out.next_obs.row_mut(filled).assign(&ndarray::aview1(self.next_obs(n.last)));
            out.reward[filled] = n.reward as f32;
            out.discount[filled] = n.discount as f32;
            filled += 1;
        }
        Ok(out)
    }
}
