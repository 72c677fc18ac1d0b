//! JSON checkpoints of network parameters.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::error::{Result, RlError};
use crate::nn::{Activation, Linear, Mlp};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `inputs x outputs`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRecord {
    pub activation: Activation,
    pub layers: Vec<LayerRecord>,
}

impl NetworkRecord {
    pub fn from_mlp(net: &Mlp<f32>) -> Self {
        Self {
            activation: net.activation(),
            layers: net
                .layers()
                .iter()
                .map(|l| LayerRecord {
                    inputs: l.w.nrows(),
                    outputs: l.w.ncols(),
                    weights: l.w.iter().copied().collect(),
                    bias: l.b.to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_mlp(&self) -> Result<Mlp<f32>> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let w = Array2::from_shape_vec((l.inputs, l.outputs), l.weights.clone())
                    .map_err(|e| RlError::Checkpoint(e.to_string()))?;
                Ok(Linear { w, b: Array1::from(l.bias.clone()) })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers, self.activation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub task: String,
    pub reward: String,
    pub seed: u64,
    pub step: u64,
    pub lookahead: usize,
    pub actor: NetworkRecord,
    pub critic1: NetworkRecord,
    pub critic2: NetworkRecord,
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent, task: &str, reward: &str, seed: u64, step: u64, lookahead: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            task: task.to_string(),
            reward: reward.to_string(),
            seed,
            step,
            lookahead,
            actor: NetworkRecord::from_mlp(&agent.actor),
            critic1: NetworkRecord::from_mlp(&agent.critic1),
            critic2: NetworkRecord::from_mlp(&agent.critic2),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(RlError::Checkpoint(format!("unsupported version {}", c.version)));
        }
        Ok(c)
    }
}
