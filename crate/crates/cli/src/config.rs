//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use deltaflow_core::noise::NoisePreset;
use deltaflow_core::RewardVariant;
use deltaflow_rl::TrainConfig;
use deltaflow_sim::task::TEMPLATE_KEYPOINTS;
use deltaflow_sim::{EnvConfig, TaskKind, LOOKAHEAD};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing field `{field}` in {path}")]
    MissingField { path: PathBuf, field: &'static str },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, message: message.into() }
}

/// What an ablation varies and how each variant is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblateMode {
    /// Train an agent per variant and seed.
    #[default]
    Train,
    /// Score the scripted expert against each variant's reference.
    Expert,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub mode: AblateMode,
    pub rewards: Vec<RewardVariant>,
    pub keypoints: Vec<usize>,
    pub noise: Vec<String>,
    /// Episodes per variant and seed in expert mode.
    pub episodes: usize,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self { mode: AblateMode::Train, rewards: Vec::new(), keypoints: Vec::new(), noise: Vec::new(), episodes: 100 }
    }
}

/// One point of an ablation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub label: String,
    pub reward: RewardVariant,
    pub keypoints: usize,
    pub noise: String,
}

fn default_reward() -> RewardVariant {
    RewardVariant::DeltaFlow
}
fn default_noise() -> String {
    "none".into()
}
fn default_keypoints() -> usize {
    TEMPLATE_KEYPOINTS
}
fn default_lookahead() -> usize {
    LOOKAHEAD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    #[serde(default = "default_reward")]
    pub reward: RewardVariant,
    /// Noise preset name, see [`NoisePreset::NAMED`].
    #[serde(default = "default_noise")]
    pub noise: String,
    /// Overrides the preset's `[gauss, drift]` multipliers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_scales: Option<[f64; 2]>,
    #[serde(default = "default_keypoints")]
    pub keypoints: usize,
    #[serde(default = "default_lookahead")]
    pub lookahead: usize,
    pub seeds: Vec<u64>,
    /// Output directory; `--out` wins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablate: Option<AblateConfig>,
}

const REQUIRED: [&str; 2] = ["task", "seeds"];

impl ExperimentConfig {
    pub fn new(task: TaskKind, seeds: Vec<u64>) -> Self {
        Self {
            task,
            reward: default_reward(),
            noise: default_noise(),
            noise_scales: None,
            keypoints: default_keypoints(),
            lookahead: default_lookahead(),
            seeds,
            out: None,
            jobs: None,
            train: TrainConfig::default(),
            ablate: None,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text, path)
    }

    /// Parses TOML text; `origin` only labels diagnostics.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let parse_err = |e: toml::de::Error| ConfigError::Parse { path: origin.into(), message: e.to_string() };
        let table: toml::Table = toml::from_str(text).map_err(parse_err)?;
        if let Some(field) = REQUIRED.into_iter().find(|f| !table.contains_key(*f)) {
            return Err(ConfigError::MissingField { path: origin.into(), field });
        }
        let config: Self = toml::from_str(text).map_err(parse_err)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("seeds", "seeds must be distinct"));
        }
        check_keypoints("keypoints", self.keypoints)?;
        if self.lookahead == 0 {
            return Err(invalid("lookahead", "must be at least 1"));
        }
        self.noise_preset()?;
        if self.jobs == Some(0) {
            return Err(invalid("jobs", "must be at least 1"));
        }
        self.train.validate().map_err(|e| invalid("train", e.to_string()))?;
        if let Some(a) = &self.ablate {
            for &k in &a.keypoints {
                check_keypoints("ablate.keypoints", k)?;
            }
            for n in &a.noise {
                parse_noise(n).map_err(|m| invalid("ablate.noise", m))?;
            }
            if a.episodes == 0 {
                return Err(invalid("ablate.episodes", "must be at least 1"));
            }
        }
        self.env_config(self.reward, self.keypoints, self.noise_preset()?)
            .validate()
            .map_err(|e| invalid("task", e.to_string()))?;
        Ok(())
    }

    pub fn noise_preset(&self) -> Result<NoisePreset, ConfigError> {
        let preset = match self.noise_scales {
            Some([g, d]) => NoisePreset::new(g, d),
            None => parse_noise(&self.noise).map_err(|m| invalid("noise", m))?,
        };
        preset.validate().map_err(|e| invalid("noise_scales", e.to_string()))?;
        Ok(preset)
    }

    /// Environment for one variant. Training keeps episodes running after
    /// success; evaluation turns that off itself.
    pub fn env_config(&self, reward: RewardVariant, keypoints: usize, noise: NoisePreset) -> EnvConfig {
        let mut env = EnvConfig::new(self.task);
        env.reward = reward;
        env.keypoints = keypoints;
        env.noise = noise;
        env.lookahead = self.lookahead;
        env.continue_after_success = true;
        env
    }

    pub fn base_env(&self) -> Result<EnvConfig, ConfigError> {
        Ok(self.env_config(self.reward, self.keypoints, self.noise_preset()?))
    }

    /// Cartesian product of the listed ablation axes; unlisted axes keep the
    /// base value.
    pub fn variants(&self) -> Result<Vec<Variant>, ConfigError> {
        let a = self.ablate.clone().unwrap_or_default();
        let rewards = if a.rewards.is_empty() { vec![self.reward] } else { a.rewards.clone() };
        let keypoints = if a.keypoints.is_empty() { vec![self.keypoints] } else { a.keypoints.clone() };
        let noise = if a.noise.is_empty() { vec![self.noise.clone()] } else { a.noise.clone() };
        let mut out = Vec::new();
        for &reward in &rewards {
            for &k in &keypoints {
                for n in &noise {
                    let mut parts = Vec::new();
                    if !a.rewards.is_empty() {
                        parts.push(format!("reward={reward}"));
                    }
                    if !a.keypoints.is_empty() {
                        parts.push(format!("keypoints={k}"));
                    }
                    if !a.noise.is_empty() {
                        parts.push(format!("noise={n}"));
                    }
                    let label = if parts.is_empty() { "base".into() } else { parts.join(",") };
                    out.push(Variant { label, reward, keypoints: k, noise: n.clone() });
                }
            }
        }
        if out.len() < 2 {
            return Err(invalid("ablate", "an ablation needs at least two variants"));
        }
        Ok(out)
    }

    /// SHA-256 of the canonical JSON form, ignoring where output goes and how
    /// many threads run it.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        canonical.jobs = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_noise(name: &str) -> Result<NoisePreset, String> {
    name.parse().map_err(|_| {
        let known: Vec<&str> = NoisePreset::NAMED.iter().map(|(n, _)| *n).collect();
        format!("unknown noise preset `{name}` (expected one of {})", known.join(", "))
    })
}

fn check_keypoints(field: &'static str, k: usize) -> Result<(), ConfigError> {
    if (deltaflow_core::flow::MIN_VISIBLE..=TEMPLATE_KEYPOINTS).contains(&k) {
        Ok(())
    } else {
        Err(invalid(
            field,
            format!("{k} is outside {}..={TEMPLATE_KEYPOINTS}", deltaflow_core::flow::MIN_VISIBLE),
        ))
    }
}
