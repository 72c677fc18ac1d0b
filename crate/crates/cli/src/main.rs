use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use deltaflow_cli::commands::{self, Ablation, PolicySource};
use deltaflow_cli::config::parse_noise;
use deltaflow_cli::{ConfigError, ExperimentConfig};
use deltaflow_sim::TaskKind;

#[derive(Parser)]
#[command(name = "deltaflow", version, about = "Flow-derived reward experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed list with a single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Expert,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per seed.
    Train,
    /// Evaluate a checkpoint, the scripted expert, or a random policy.
    Evaluate {
        #[arg(long, conflicts_with = "policy")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<PolicyKind>,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
    /// Score an observed flow against a reference flow.
    Score {
        observed: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        c_tr: Option<f64>,
        #[arg(long)]
        c_rot: Option<f64>,
    },
    /// Run every ablation variant under the same seeds.
    Ablate,
    /// Save a scripted expert's flow and episode record.
    RecordExpert {
        #[arg(long)]
        task: TaskKind,
    },
    /// Write a noised copy of a flow file.
    Perturb {
        flow: PathBuf,
        #[arg(long)]
        noise: String,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli.config.as_deref().ok_or(ConfigError::MissingField { path: "<command line>".into(), field: "config" })?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if cli.jobs.is_some() {
        config.jobs = cli.jobs;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli, config: Option<&ExperimentConfig>) -> PathBuf {
    cli.out.clone().or_else(|| config.and_then(|c| c.out.clone())).unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train => {
            let config = load_config(cli)?;
            let out = out_dir(cli, Some(&config));
            for r in commands::train(&config, &out)? {
                println!(
                    "seed {}: final success {:.3}, max {:.3}, auc {:.4}, {} updates",
                    r.seed,
                    r.curve.final_success(),
                    r.curve.max_success(),
                    r.curve.auc(),
                    r.updates
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Evaluate { checkpoint, policy, episodes } => {
            let config = load_config(cli)?;
            let out = out_dir(cli, Some(&config));
            let source = match (checkpoint, policy) {
                (Some(p), _) => PolicySource::Checkpoint(p.clone()),
                (None, Some(PolicyKind::Random)) => PolicySource::Random,
                (None, Some(PolicyKind::Expert)) => PolicySource::Expert,
                (None, None) => anyhow::bail!(ConfigError::MissingField {
                    path: "<command line>".into(),
                    field: "checkpoint"
                }),
            };
            for r in commands::evaluate(&config, &source, *episodes, &out)? {
                println!("seed {}: success {:.3}, mean reward {:.4}", r.seed, r.success_rate, r.mean_reward);
            }
        }
        Command::Score { observed, reference, c_tr, c_rot } => {
            let out = cli.out.as_deref();
            let rows = commands::score(observed, reference, *c_tr, *c_rot, out)?;
            println!("steps {}, mean r_delta {:.6}", rows.len(), commands::mean_reward(&rows));
        }
        Command::Ablate => {
            let config = load_config(cli)?;
            let out = out_dir(cli, Some(&config));
            match commands::ablate(&config, &out)? {
                Ablation::Train(runs) => {
                    for r in runs {
                        println!(
                            "{} seed {}: final success {:.3}, auc {:.4}",
                            r.variant.label,
                            r.run.seed,
                            r.run.curve.final_success(),
                            r.run.curve.auc()
                        );
                    }
                }
                Ablation::Expert(rows) => {
                    for r in rows {
                        println!(
                            "{} seed {}: success {:.3}, mean reward {:.4}, mean r_track {:.4}",
                            r.variant, r.seed, r.success_rate, r.mean_reward, r.mean_r_track
                        );
                    }
                }
            }
        }
        Command::RecordExpert { task } => {
            let out = out_dir(cli, None);
            let files = commands::record_expert(*task, cli.seed.unwrap_or(0), &out)?;
            println!("{}\n{}", files.flow.display(), files.episode.display());
        }
        Command::Perturb { flow, noise } => {
            let preset = parse_noise(noise).map_err(|m| ConfigError::Invalid { field: "noise", message: m })?;
            let out = out_dir(cli, None);
            let path = commands::perturb(flow, preset, cli.seed.unwrap_or(0), &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return "config";
        }
        if cause.is::<deltaflow_core::Error>() {
            return "data";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "runtime"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).with_context(|| format!("deltaflow {}", command_name(&cli.command))) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = error_kind(&err);
            let line = serde_json::json!({ "error": kind, "message": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::from(if kind == "config" { 2 } else { 1 })
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Train => "train",
        Command::Evaluate { .. } => "evaluate",
        Command::Score { .. } => "score",
        Command::Ablate => "ablate",
        Command::RecordExpert { .. } => "record-expert",
        Command::Perturb { .. } => "perturb",
    }
}
