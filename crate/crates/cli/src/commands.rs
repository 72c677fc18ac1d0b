//! Subcommand implementations. Each writes its artifacts under an output
//! directory and returns the same numbers in structured form.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use deltaflow_core::noise::{perturb_flow, BASE_DRIFT, BASE_SIGMA};
use deltaflow_core::pipeline::{load_flow, save_flow, FlowFile};
use deltaflow_core::reward::{calibrate_rotation_scale, flow_match_reward};
use deltaflow_core::rng::derive_seed;
use deltaflow_core::{align_flow_index, delta_flow, NoisePreset, RewardPhase, RewardScale};
use deltaflow_rl::checkpoint::Checkpoint;
use deltaflow_rl::{evaluate as rl_evaluate, train as rl_train, ActorPolicy, LearningCurve, RandomPolicy};
use deltaflow_sim::expert::default_demo;
use deltaflow_sim::record::record_episode;
use deltaflow_sim::{Env, EnvConfig, Observation, Policy, ScriptedExpert, TaskKind};
use serde::Serialize;

use crate::config::{hex_digest, parse_noise, AblateMode, ConfigError, ExperimentConfig, Variant};
use crate::output::{mean_std, num, write_csv};
use crate::pool;

pub const CURVE_HEADER: [&str; 4] = ["step", "seed", "success_rate", "mean_reward"];
pub const SUMMARY_HEADER: [&str; 6] = ["step", "seeds", "success_mean", "success_std", "reward_mean", "reward_std"];

pub fn curve_file(seed: u64) -> String {
    format!("curve_seed{seed}.csv")
}

/// Cross-seed statistics at one evaluation step.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub step: u64,
    pub seeds: usize,
    pub success_mean: f64,
    pub success_std: f64,
    pub reward_mean: f64,
    pub reward_std: f64,
}

impl SummaryRow {
    fn cells(&self) -> Vec<String> {
        vec![
            self.step.to_string(),
            self.seeds.to_string(),
            num(self.success_mean),
            num(self.success_std),
            num(self.reward_mean),
            num(self.reward_std),
        ]
    }
}

/// Aggregates curves that share their evaluation steps.
pub fn summarize(curves: &[&LearningCurve]) -> Result<Vec<SummaryRow>> {
    let Some(first) = curves.first() else { return Ok(Vec::new()) };
    let steps: Vec<u64> = first.points.iter().map(|p| p.step).collect();
    for c in curves {
        ensure!(
            c.points.iter().map(|p| p.step).eq(steps.iter().copied()),
            "curves evaluate at different steps"
        );
    }
    Ok(steps
        .iter()
        .enumerate()
        .map(|(i, &step)| {
            let success: Vec<f64> = curves.iter().map(|c| c.points[i].success_rate).collect();
            let reward: Vec<f64> = curves.iter().map(|c| c.points[i].mean_reward).collect();
            let (success_mean, success_std) = mean_std(&success);
            let (reward_mean, reward_std) = mean_std(&reward);
            SummaryRow { step, seeds: curves.len(), success_mean, success_std, reward_mean, reward_std }
        })
        .collect())
}

fn curve_rows(curve: &LearningCurve) -> Vec<Vec<String>> {
    curve
        .points
        .iter()
        .map(|p| vec![p.step.to_string(), curve.seed.to_string(), num(p.success_rate), num(p.mean_reward)])
        .collect()
}

fn workers(config: &ExperimentConfig) -> usize {
    config.jobs.unwrap_or_else(pool::default_workers)
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub seed: u64,
    pub curve: LearningCurve,
    pub updates: u64,
}

fn train_one(config: &ExperimentConfig, env: &EnvConfig, seed: u64) -> Result<(TrainRun, Checkpoint)> {
    let outcome = rl_train(env, &config.train, seed).with_context(|| format!("training seed {seed}"))?;
    let checkpoint = Checkpoint::from_agent(
        &outcome.agent,
        env.task.name(),
        env.reward.name(),
        seed,
        config.train.total_steps,
        env.lookahead,
    );
    Ok((TrainRun { seed, curve: outcome.curve, updates: outcome.updates }, checkpoint))
}

/// Trains one agent per seed. Writes `curve_seed<S>.csv` per seed,
/// `summary.csv`, and `checkpoints/seed<S>.json`.
pub fn train(config: &ExperimentConfig, out: &Path) -> Result<Vec<TrainRun>> {
    let env = config.base_env()?;
    let hash = config.hash();
    let results = pool::run(&config.seeds, workers(config), |&seed| train_one(config, &env, seed));
    let mut runs = Vec::new();
    for r in results {
        let (run, checkpoint) = r?;
        write_csv(&out.join(curve_file(run.seed)), &hash, &CURVE_HEADER, &curve_rows(&run.curve))?;
        let dir = out.join("checkpoints");
        std::fs::create_dir_all(&dir)?;
        checkpoint.save(dir.join(format!("seed{}.json", run.seed)))?;
        runs.push(run);
    }
    let curves: Vec<&LearningCurve> = runs.iter().map(|r| &r.curve).collect();
    let rows: Vec<Vec<String>> = summarize(&curves)?.iter().map(SummaryRow::cells).collect();
    write_csv(&out.join("summary.csv"), &hash, &SUMMARY_HEADER, &rows)?;
    Ok(runs)
}

/// Which policy `evaluate` rolls out.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicySource {
    Checkpoint(PathBuf),
    Expert,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_reward: f64,
}

/// Greedy evaluation per configured seed; writes `eval.csv`.
pub fn evaluate(config: &ExperimentConfig, source: &PolicySource, episodes: usize, out: &Path) -> Result<Vec<EvalRow>> {
    ensure!(episodes > 0, ConfigError::Invalid { field: "episodes", message: "must be at least 1".into() });
    let env = config.base_env()?;
    let actor = match source {
        PolicySource::Checkpoint(path) => {
            let ckpt = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
            if ckpt.task != env.task.name() || ckpt.lookahead != env.lookahead {
                bail!(ConfigError::Invalid {
                    field: "task",
                    message: format!(
                        "checkpoint is for {} with lookahead {}, config has {} with lookahead {}",
                        ckpt.task,
                        ckpt.lookahead,
                        env.task,
                        env.lookahead
                    ),
                });
            }
            let actor = ckpt.actor.to_mlp()?;
            ensure!(
                actor.input_dim() == Observation::dim(env.lookahead),
                "checkpoint actor expects {} inputs, the environment provides {}",
                actor.input_dim(),
                Observation::dim(env.lookahead)
            );
            Some(actor)
        }
        _ => None,
    };
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let mut policy: Box<dyn Policy> = match (source, &actor) {
            (PolicySource::Expert, _) => Box::new(ScriptedExpert::default()),
            (PolicySource::Random, _) => Box::new(RandomPolicy::new(seed)),
            (PolicySource::Checkpoint(_), Some(a)) => Box::new(ActorPolicy::new(a.clone())),
            (PolicySource::Checkpoint(_), None) => unreachable!("actor loaded above"),
        };
        let r = rl_evaluate(&env, policy.as_mut(), episodes, seed)?;
        rows.push(EvalRow { seed, episodes, success_rate: r.success_rate, mean_reward: r.mean_reward });
    }
    let hash_input = serde_json::json!({
        "command": "evaluate",
        "config": config.hash(),
        "policy": match source {
            PolicySource::Checkpoint(p) => format!("checkpoint:{}", hex_digest(&std::fs::read(p)?)),
            PolicySource::Expert => "expert".into(),
            PolicySource::Random => "random".into(),
        },
        "episodes": episodes,
    });
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.seed.to_string(), r.episodes.to_string(), num(r.success_rate), num(r.mean_reward)])
        .collect();
    write_csv(
        &out.join("eval.csv"),
        &hex_digest(hash_input.to_string().as_bytes()),
        &["seed", "episodes", "success_rate", "mean_reward"],
        &cells,
    )?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub step: usize,
    pub reference_index: usize,
    pub r_delta: f64,
    pub cumulative: f64,
}

/// Flow-matching reward of `observed` against `reference` at every observed
/// frame. `c_rot` defaults to the reference's calibrated scale. Writes
/// `score.csv` when `out` is given.
pub fn score(
    observed: &Path,
    reference: &Path,
    c_tr: Option<f64>,
    c_rot: Option<f64>,
    out: Option<&Path>,
) -> Result<Vec<ScoreRow>> {
    let a = load_flow(observed).with_context(|| format!("loading {}", observed.display()))?;
    let b = load_flow(reference).with_context(|| format!("loading {}", reference.display()))?;
    let da = delta_flow(&a).with_context(|| format!("delta-flow of {}", observed.display()))?;
    let db = delta_flow(&b).with_context(|| format!("delta-flow of {}", reference.display()))?;
    let mut scale = RewardScale::default();
    if let Some(c) = c_tr {
        scale.c_tr = c;
    }
    scale.c_rot = match c_rot {
        Some(c) => c,
        None => calibrate_rotation_scale(&b, &db)?,
    };
    scale.validate()?;
    let mut rows = Vec::with_capacity(da.len());
    let mut cumulative = 0.0;
    for t in 0..da.len() {
        let j = align_flow_index(t, da.len(), db.len())?;
        let r = flow_match_reward(&da.step(t), &db.step(j), &scale);
        cumulative += r;
        rows.push(ScoreRow { step: t, reference_index: j, r_delta: r, cumulative });
    }
    if let Some(out) = out {
        let hash_input = serde_json::json!({
            "command": "score",
            "observed": hex_digest(&std::fs::read(observed)?),
            "reference": hex_digest(&std::fs::read(reference)?),
            "c_tr": scale.c_tr,
            "c_rot": scale.c_rot,
        });
        let cells: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.step.to_string(), r.reference_index.to_string(), num(r.r_delta), num(r.cumulative)])
            .collect();
        write_csv(
            &out.join("score.csv"),
            &hex_digest(hash_input.to_string().as_bytes()),
            &["step", "reference_index", "r_delta", "cumulative"],
            &cells,
        )?;
    }
    Ok(rows)
}

pub fn mean_reward(rows: &[ScoreRow]) -> f64 {
    rows.iter().map(|r| r.r_delta).sum::<f64>() / rows.len() as f64
}

/// Per-variant, per-seed result of an expert-mode ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertRow {
    pub variant: String,
    pub seed: u64,
    pub episodes: usize,
    pub success_rate: f64,
    /// Mean reward per step.
    pub mean_reward: f64,
    /// Mean flow-matching reward over tracking-phase steps.
    pub mean_r_track: f64,
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub variant: Variant,
    pub run: TrainRun,
}

#[derive(Debug, Clone)]
pub enum Ablation {
    Train(Vec<AblationRun>),
    Expert(Vec<ExpertRow>),
}

fn variant_env(config: &ExperimentConfig, v: &Variant) -> Result<EnvConfig> {
    let noise = parse_noise(&v.noise).map_err(|m| ConfigError::Invalid { field: "ablate.noise", message: m })?;
    Ok(config.env_config(v.reward, v.keypoints, noise))
}

fn expert_scores(env: &EnvConfig, label: &str, seed: u64, episodes: usize) -> Result<ExpertRow> {
    let mut env_config = env.clone();
    env_config.continue_after_success = false;
    let mut env = Env::new(env_config)?;
    let mut expert = ScriptedExpert::default();
    let (mut successes, mut reward, mut steps, mut track, mut tracked) = (0usize, 0.0, 0usize, 0.0, 0usize);
    for i in 0..episodes {
        let outcomes = env.rollout(&mut expert, derive_seed(seed, "cli/ablate", i as u64))?;
        successes += usize::from(outcomes.iter().any(|o| o.success));
        for o in &outcomes {
            reward += o.reward;
            steps += 1;
            if o.phase == RewardPhase::Tracking {
                track += o.r_track;
                tracked += 1;
            }
        }
    }
    Ok(ExpertRow {
        variant: label.to_string(),
        seed,
        episodes,
        success_rate: successes as f64 / episodes as f64,
        mean_reward: reward / steps as f64,
        mean_r_track: if tracked == 0 { f64::NAN } else { track / tracked as f64 },
    })
}

/// Runs every variant under the same seeds. Train mode writes
/// `ablation_curves.csv`, `ablation.csv` (cross-seed statistics per step) and
/// `ablation_runs.csv`; expert mode writes `ablation.csv` with one row per
/// variant and seed.
pub fn ablate(config: &ExperimentConfig, out: &Path) -> Result<Ablation> {
    let variants = config.variants()?;
    let hash = config.hash();
    let jobs: Vec<(usize, u64)> =
        (0..variants.len()).flat_map(|v| config.seeds.iter().map(move |&s| (v, s))).collect();
    let envs = variants.iter().map(|v| variant_env(config, v)).collect::<Result<Vec<_>>>()?;
    let mode = config.ablate.as_ref().map(|a| a.mode).unwrap_or_default();
    match mode {
        AblateMode::Expert => {
            let episodes = config.ablate.as_ref().map_or(100, |a| a.episodes);
            let results = pool::run(&jobs, workers(config), |&(v, seed)| {
                expert_scores(&envs[v], &variants[v].label, seed, episodes)
            });
            let rows = results.into_iter().collect::<Result<Vec<_>>>()?;
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.variant.clone(),
                        r.seed.to_string(),
                        r.episodes.to_string(),
                        num(r.success_rate),
                        num(r.mean_reward),
                        num(r.mean_r_track),
                    ]
                })
                .collect();
            write_csv(
                &out.join("ablation.csv"),
                &hash,
                &["variant", "seed", "episodes", "success_rate", "mean_reward", "mean_r_track"],
                &cells,
            )?;
            Ok(Ablation::Expert(rows))
        }
        AblateMode::Train => {
            let results = pool::run(&jobs, workers(config), |&(v, seed)| train_one(config, &envs[v], seed));
            let mut runs = Vec::new();
            for (&(v, _), r) in jobs.iter().zip(results) {
                runs.push(AblationRun { variant: variants[v].clone(), run: r?.0 });
            }
            let mut curve_cells = Vec::new();
            let mut summary_cells = Vec::new();
            let mut run_cells = Vec::new();
            for v in &variants {
                let of_variant: Vec<&AblationRun> = runs.iter().filter(|r| r.variant.label == v.label).collect();
                for r in &of_variant {
                    for mut row in curve_rows(&r.run.curve) {
                        row.insert(0, v.label.clone());
                        curve_cells.push(row);
                    }
                    let c = &r.run.curve;
                    run_cells.push(vec![
                        v.label.clone(),
                        r.run.seed.to_string(),
                        num(c.auc()),
                        num(c.final_success()),
                        num(c.max_success()),
                    ]);
                }
                let curves: Vec<&LearningCurve> = of_variant.iter().map(|r| &r.run.curve).collect();
                for row in summarize(&curves)? {
                    let mut cells = row.cells();
                    cells.insert(0, v.label.clone());
                    summary_cells.push(cells);
                }
            }
            let mut curve_header = vec!["variant"];
            curve_header.extend(CURVE_HEADER);
            write_csv(&out.join("ablation_curves.csv"), &hash, &curve_header, &curve_cells)?;
            let mut summary_header = vec!["variant"];
            summary_header.extend(SUMMARY_HEADER);
            write_csv(&out.join("ablation.csv"), &hash, &summary_header, &summary_cells)?;
            write_csv(
                &out.join("ablation_runs.csv"),
                &hash,
                &["variant", "seed", "auc", "final_success", "max_success"],
                &run_cells,
            )?;
            Ok(Ablation::Train(runs))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpertFiles {
    pub flow: PathBuf,
    pub episode: PathBuf,
}

/// Saves the scripted expert's object flow and its scored episode.
pub fn record_expert(task: TaskKind, seed: u64, out: &Path) -> Result<ExpertFiles> {
    std::fs::create_dir_all(out)?;
    let demo = default_demo(task, seed)?;
    let flow = out.join(format!("{task}-seed{seed}.flow.json"));
    save_flow(&flow, task.name(), &demo.flow)?;
    let mut env = Env::new(EnvConfig::new(task))?;
    let record = record_episode(&mut env, &mut ScriptedExpert::default(), seed)?;
    let episode = out.join(format!("{task}-seed{seed}.episode.json"));
    record.save(&episode)?;
    Ok(ExpertFiles { flow, episode })
}

/// Writes a noised copy of a flow file next to the others in `out`.
pub fn perturb(input: &Path, preset: NoisePreset, seed: u64, out: &Path) -> Result<PathBuf> {
    let file = FlowFile::load(input).with_context(|| format!("loading {}", input.display()))?;
    let flow = file.to_flow()?;
    let noisy = perturb_flow(&flow, preset, BASE_SIGMA, BASE_DRIFT, seed)?;
    let name = input.file_name().and_then(|n| n.to_str()).unwrap_or("flow.json");
    let stem = name.strip_suffix(".json").unwrap_or(name);
    let stem = stem.strip_suffix(".flow").unwrap_or(stem);
    std::fs::create_dir_all(out)?;
    let path = out.join(format!("{stem}.{preset}.seed{seed}.flow.json"));
    save_flow(&path, &file.task, &noisy)?;
    Ok(path)
}
