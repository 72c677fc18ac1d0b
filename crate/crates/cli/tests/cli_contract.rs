use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use deltaflow_cli::commands::{self, Ablation, PolicySource};
use deltaflow_cli::output::read_csv;
use deltaflow_cli::{ConfigError, ExperimentConfig};
use deltaflow_core::NoisePreset;
use deltaflow_sim::TaskKind;

const TINY_TRAIN: &str = r#"
task = "pick-place"
seeds = [0, 1, 2]

[train]
batch_size = 32
hidden = [16, 16]
seed_frames = 200
exploration_steps = 100
total_steps = 600
eval_every = 200
eval_episodes = 2
replay_capacity = 1000
stddev_schedule = { initial = 1.0, final = 0.1, duration = 500 }
"#;

fn parse(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, Path::new("inline.toml")).unwrap()
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deltaflow"))
}

#[test]
fn missing_task_names_the_field() {
    let err = ExperimentConfig::parse("seeds = [1]\n", Path::new("x.toml")).unwrap_err();
    assert!(matches!(err, ConfigError::MissingField { field: "task", .. }));
    assert!(err.to_string().contains("`task`"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(&path, "seeds = [1]\n").unwrap();
    let out = bin().arg("train").arg("--config").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line: serde_json::Value = serde_json::from_str(stderr.trim()).unwrap();
    assert_eq!(line["error"], "config");
    assert!(line["message"].as_str().unwrap().contains("`task`"));
}

#[test]
fn malformed_values_report_their_location() {
    let err = ExperimentConfig::parse("task = \"pour\"\nseeds = [1]\nkeypoints = \"many\"\n", Path::new("x.toml"))
        .unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 3") && msg.contains("keypoints"), "{msg}");
}

#[test]
fn three_seed_train_writes_three_curves_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse(TINY_TRAIN);
    let runs = commands::train(&config, dir.path()).unwrap();
    assert_eq!(runs.len(), 3);

    let files = csv_files(dir.path());
    let names: Vec<&str> = files.keys().map(String::as_str).collect();
    assert_eq!(names, ["curve_seed0.csv", "curve_seed1.csv", "curve_seed2.csv", "summary.csv"]);
    for seed in 0..3 {
        assert!(dir.path().join(format!("checkpoints/seed{seed}.json")).exists());
    }

    // summary statistics recomputed from the curve files
    let mut per_step: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for seed in 0..3 {
        let (hash, header, rows) = read_csv(&dir.path().join(format!("curve_seed{seed}.csv"))).unwrap();
        assert_eq!(hash, config.hash());
        assert_eq!(header, ["step", "seed", "success_rate", "mean_reward"]);
        for row in rows {
            let e = per_step.entry(row[0].parse().unwrap()).or_default();
            assert_eq!(row[1], seed.to_string());
            e.0.push(row[2].parse().unwrap());
            e.1.push(row[3].parse().unwrap());
        }
    }
    let (_, header, rows) = read_csv(&dir.path().join("summary.csv")).unwrap();
    assert_eq!(header, ["step", "seeds", "success_mean", "success_std", "reward_mean", "reward_std"]);
    assert_eq!(rows.len(), per_step.len());
    let stats = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        (m, (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt())
    };
    for (row, (step, (succ, rew))) in rows.iter().zip(&per_step) {
        assert_eq!(row[0], step.to_string());
        assert_eq!(row[1], "3");
        let got: Vec<f64> = row[2..].iter().map(|c| c.parse().unwrap()).collect();
        let (sm, ss) = stats(succ);
        let (rm, rs) = stats(rew);
        for (g, w) in got.iter().zip([sm, ss, rm, rs]) {
            assert!((g - w).abs() <= 1e-12, "step {step}: {g} vs {w}");
        }
    }

    // the saved checkpoint evaluates under the same config
    let ckpt = dir.path().join("checkpoints/seed1.json");
    let eval = commands::evaluate(&config, &PolicySource::Checkpoint(ckpt.clone()), 2, dir.path()).unwrap();
    assert_eq!(eval.len(), 3);
    let mut other = config.clone();
    other.lookahead = 4;
    assert!(commands::evaluate(&other, &PolicySource::Checkpoint(ckpt), 2, dir.path()).is_err());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut config = parse(TINY_TRAIN);
    config.jobs = Some(1);
    commands::train(&config, a.path()).unwrap();
    config.jobs = Some(3);
    commands::train(&config, b.path()).unwrap();
    assert_eq!(csv_files(a.path()), csv_files(b.path()));

    let cfg = dir_config(a.path(), "[train]\ntotal_steps = 1\n");
    for d in [a.path(), b.path()] {
        let out = bin().args(["ablate", "--config"]).arg(&cfg).arg("--out").arg(d.join("ablate")).output().unwrap();
        assert!(out.status.success());
    }
    let ablate = csv_files(&a.path().join("ablate"));
    assert!(ablate.contains_key("ablation.csv"));
    assert_eq!(ablate, csv_files(&b.path().join("ablate")));
}

fn dir_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("ablate.toml");
    std::fs::write(
        &path,
        format!(
            "task = \"pour\"\nseeds = [4, 5]\n{extra}[ablate]\nmode = \"expert\"\nepisodes = 5\nnoise = [\"none\", \"gauss2-drift2\"]\nkeypoints = [32, 128]\n"
        ),
    )
    .unwrap();
    path
}

fn expert_flow(dir: &Path, task: TaskKind, seed: u64) -> PathBuf {
    commands::record_expert(task, seed, dir).unwrap().flow
}

#[test]
fn scoring_a_flow_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    for task in TaskKind::ALL {
        let flow = expert_flow(dir.path(), task, 2);
        let rows = commands::score(&flow, &flow, None, None, Some(dir.path())).unwrap();
        assert!(rows.iter().all(|r| r.r_delta == 1.0), "{task}");
        assert_eq!(rows.last().unwrap().cumulative, rows.len() as f64);
    }
}

#[test]
fn noisier_copies_score_lower() {
    let dir = tempfile::tempdir().unwrap();
    let mut small = Vec::new();
    let mut large = Vec::new();
    for seed in 0..10 {
        let flow = expert_flow(dir.path(), TaskKind::PickPlace, seed);
        for (preset, acc) in [(NoisePreset::SMALL_GAUSS, &mut small), (NoisePreset::LARGE_DRIFT, &mut large)] {
            let noisy = commands::perturb(&flow, preset, seed + 100, dir.path()).unwrap();
            acc.push(commands::mean_reward(&commands::score(&noisy, &flow, None, None, None).unwrap()));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (s, l) = (mean(&small), mean(&large));
    assert!(l > 0.0 && l < 1.0, "large drift mean {l}");
    assert!(l < s, "large drift {l} vs small gauss {s}");
}

#[test]
fn mismatched_tasks_score_far_lower() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..5 {
        for (a, b) in [(TaskKind::PickPlace, TaskKind::Pour), (TaskKind::Open, TaskKind::PickPlace), (TaskKind::Pivot, TaskKind::Open)] {
            let reference = expert_flow(dir.path(), a, seed);
            let noisy = commands::perturb(&reference, NoisePreset::SMALL_GAUSS, seed, dir.path()).unwrap();
            let other = expert_flow(dir.path(), b, seed);
            let matched = commands::mean_reward(&commands::score(&noisy, &reference, None, None, None).unwrap());
            let mismatched = commands::mean_reward(&commands::score(&other, &reference, None, None, None).unwrap());
            assert!(matched - mismatched >= 0.3, "{a} vs {b}, seed {seed}: {matched} vs {mismatched}");
        }
    }
}

#[test]
fn noise_ablation_orders_mean_reward() {
    let mut config = parse("task = \"pick-place\"\nseeds = [0]\n");
    config.ablate = Some(deltaflow_cli::AblateConfig {
        mode: deltaflow_cli::AblateMode::Expert,
        noise: ["none", "gauss1-drift0", "gauss4-drift0", "gauss2-drift1", "gauss2-drift2"].map(String::from).to_vec(),
        episodes: 100,
        ..Default::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let Ablation::Expert(rows) = commands::ablate(&config, dir.path()).unwrap() else { panic!("expert mode") };
    let reward: BTreeMap<&str, f64> =
        rows.iter().map(|r| (r.variant.strip_prefix("noise=").unwrap(), r.mean_reward)).collect();
    for chain in [["none", "gauss1-drift0", "gauss4-drift0"], ["none", "gauss2-drift1", "gauss2-drift2"]] {
        for w in chain.windows(2) {
            assert!(reward[w[0]] >= reward[w[1]], "{} {} < {} {}", w[0], reward[w[0]], w[1], reward[w[1]]);
        }
    }
    assert!(rows.iter().all(|r| r.success_rate == 1.0));
}

#[test]
fn reward_ablation_uses_identical_seeds() {
    let mut config = parse(TINY_TRAIN);
    config.seeds = vec![3, 9];
    config.train.total_steps = 400;
    config.ablate = Some(deltaflow_cli::AblateConfig {
        rewards: vec![deltaflow_core::RewardVariant::DeltaFlow, deltaflow_core::RewardVariant::SparseOnly],
        ..Default::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let Ablation::Train(runs) = commands::ablate(&config, dir.path()).unwrap() else { panic!("train mode") };
    let families: BTreeMap<String, Vec<u64>> = runs.iter().fold(BTreeMap::new(), |mut m, r| {
        m.entry(r.variant.label.clone()).or_default().push(r.run.seed);
        m
    });
    assert_eq!(families.len(), 2);
    assert!(families.values().all(|s| s == &[3, 9]));
    let (_, header, rows) = read_csv(&dir.path().join("ablation.csv")).unwrap();
    assert_eq!(header[0], "variant");
    assert!(header.contains(&"success_std".to_string()));
    assert_eq!(rows.len(), 2 * 3);
}

#[test]
fn keypoint_ablation_runs() {
    let mut config = parse("task = \"pivot\"\nseeds = [1]\n");
    config.ablate = Some(deltaflow_cli::AblateConfig {
        mode: deltaflow_cli::AblateMode::Expert,
        keypoints: vec![32, 64, 128],
        episodes: 3,
        ..Default::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let Ablation::Expert(rows) = commands::ablate(&config, dir.path()).unwrap() else { panic!("expert mode") };
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.success_rate == 1.0 && r.mean_r_track > 0.9));
}

#[test]
fn binary_records_perturbs_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = |args: &[&str]| {
        let out = bin().args(args).arg("--out").arg(d).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    ok(&["record-expert", "--task", "open", "--seed", "4"]);
    let flow = d.join("open-seed4.flow.json");
    assert!(d.join("open-seed4.episode.json").exists());
    let noisy = ok(&["perturb", flow.to_str().unwrap(), "--noise", "gauss4-drift0", "--seed", "2"]);
    let stdout = ok(&["score", noisy.trim(), flow.to_str().unwrap()]);
    assert!(stdout.starts_with("steps 51"), "{stdout}");
    let (_, header, rows) = read_csv(&d.join("score.csv")).unwrap();
    assert_eq!(header, ["step", "reference_index", "r_delta", "cumulative"]);
    assert_eq!(rows.len(), 51);

    let bad = bin().args(["score", "missing.json"]).arg(&flow).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let line: serde_json::Value = serde_json::from_slice(bad.stderr.trim_ascii()).unwrap();
    assert!(line["message"].as_str().unwrap().contains("missing.json"));
    let unknown = bin().args(["perturb"]).arg(&flow).args(["--noise", "loud"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn expert_policy_evaluates_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let config = parse("task = \"pick-place\"\nseeds = [0, 1]\n");
    let rows = commands::evaluate(&config, &PolicySource::Expert, 10, dir.path()).unwrap();
    assert!(rows.iter().all(|r| r.success_rate == 1.0));
    assert!(commands::evaluate(&config, &PolicySource::Random, 0, dir.path()).is_err());
}
