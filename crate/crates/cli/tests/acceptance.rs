//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion to stderr, then fails if any criterion failed.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use deltaflow_cli::commands::{self, Ablation, AblationRun};
use deltaflow_cli::ExperimentConfig;
use deltaflow_core::flow::MIN_VISIBLE;
use deltaflow_core::noise::{perturb_flow, BASE_DRIFT, BASE_SIGMA};
use deltaflow_core::pipeline::subsample;
use deltaflow_core::reward::{
    calibrate_rotation_scale, flow_match_reward, hybrid_reward, pose_match_reward, reaching_reward, Events,
    PhaseMachine, PlanarPose, ALPHA, BETA, TAU,
};
use deltaflow_core::rng::{derive_seed, stream};
use deltaflow_core::{delta_flow, DeltaStep, KeypointFlow, NoisePreset, RewardPhase, RewardScale, Vec2};
use deltaflow_sim::expert::default_demo;
use deltaflow_sim::{Env, EnvConfig, ScriptedExpert, TaskKind, PIXELS_PER_UNIT};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Result<Verdict> {
    Ok(Verdict { pass, detail: detail.into() })
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// 1. delta-flow against the analytic rigid-motion result.
fn rigid_oracle() -> Result<Verdict> {
    let mut rng = stream(1, "acceptance/rigid", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(MIN_VISIBLE..=256);
        let t = rng.random_range(2..=128);
        let centre = Vec2::new(rng.random_range(100.0..380.0), rng.random_range(100.0..380.0));
        let radius = rng.random_range(5.0..80.0);
        let mut base: Vec<Vec2> = (0..n)
            .map(|_| centre + Vec2::new(rng.random_range(-radius..radius), rng.random_range(-radius..radius)))
            .collect();
        let c = base.iter().fold(Vec2::ZERO, |s, &p| s + p) / n as f64;
        // centre the template exactly so the mean offset is zero
        base.iter_mut().for_each(|p| *p = *p - c);
        let spread = base.iter().map(|p| p.norm_sq()).sum::<f64>() / n as f64;
        let motion: Vec<(f64, Vec2)> = (0..t)
            .map(|i| {
                if i == 0 {
                    (0.0, Vec2::ZERO)
                } else {
                    (rng.random_range(-3.0..3.0), Vec2::new(rng.random_range(-150.0..150.0), rng.random_range(-150.0..150.0)))
                }
            })
            .collect();
        let frames: Vec<Vec<Vec2>> =
            motion.iter().map(|&(a, s)| base.iter().map(|&p| c + s + p.rotate(a)).collect()).collect();
        let d = delta_flow(&KeypointFlow::fully_visible(frames)?)?;
        for (i, &(a, s)) in motion.iter().enumerate() {
            let tr = d.translations[i] - s;
            let rot = d.rotations[i] - (-a.sin() * spread);
            worst = worst.max(tr.x.abs()).max(tr.y.abs()).max(rot.abs());
        }
    }
    verdict(worst <= 1e-9, format!("max component error {worst:.2e} over 1000 flows"))
}

// 2. Reward formulas, the reward machine's four cases, and its invariants.
fn reward_suite() -> Result<Verdict> {
    let scale = RewardScale::default();
    let step = |x: f64, y: f64, r: f64| DeltaStep { translation: Vec2::new(x, y), rotation: r };
    let mut failures = Vec::new();
    let mut check = |ok: bool, what: &str| {
        if !ok {
            failures.push(what.to_string());
        }
    };
    let g = step(12.0, -7.0, 300.0);
    check(flow_match_reward(&g, &g, &scale) == 1.0, "perfect match");
    check(flow_match_reward(&step(12.0 + scale.c_tr.sqrt(), -7.0, 300.0), &g, &scale) == 0.0, "clip boundary");
    let quarter = step(12.0 + (scale.c_tr / 4.0).sqrt(), -7.0, 300.0 + (scale.c_rot / 4.0).sqrt());
    check((flow_match_reward(&quarter, &g, &scale) - 0.5).abs() < 1e-12, "quarter plus quarter");
    check((reaching_reward(1e-12, TAU) - 1.0).abs() < 1e-10, "reaching limit");
    // 1 - tanh(1) to 16 significant digits
    check((reaching_reward(0.1, TAU) - 0.238_405_844_044_235_1).abs() < 1e-15, "reaching at 0.1");
    check(ALPHA == 0.25 && BETA == 0.75 && TAU == 10.0, "constants");
    let none = Events::default();
    let sub = Events { subgoal_done: true, task_done: false };
    let done = Events { subgoal_done: false, task_done: true };
    use RewardPhase::*;
    check(hybrid_reward(Tracking, 0.3, 1.0, none, &scale)? == (1.0, Tracking), "tracking cap");
    check(hybrid_reward(Reaching, 0.1, 0.0, none, &scale)? == (ALPHA * reaching_reward(0.1, TAU), Reaching), "reaching");
    check(hybrid_reward(Reaching, 0.0, 0.0, sub, &scale)? == (ALPHA, SubgoalJustReached), "subgoal");
    check(hybrid_reward(Tracking, 0.0, 0.4, done, &scale)? == (1.0, Completed), "completion");
    check(hybrid_reward(Completed, 0.5, 0.0, none, &scale)? == (1.0, Completed), "absorbing");
    check(hybrid_reward(Reaching, 0.0, 0.0, done, &scale).is_err(), "done before subgoal");
    check(hybrid_reward(Tracking, 0.0, 0.0, sub, &scale).is_err(), "second subgoal");
    let p = PlanarPose { position: Vec2::new(100.0, 50.0), heading: 0.3 };
    check(pose_match_reward(&p, &p, &scale) == 1.0, "pose identical");
    let far = PlanarPose { position: p.position + Vec2::new(scale.c_tr.sqrt(), 0.0), heading: 0.3 };
    check(pose_match_reward(&far, &p, &scale) == 0.0, "pose clip");

    // random sweep of the machine
    let mut rng = stream(2, "acceptance/machine", 0);
    let mut cases = [0usize; 4];
    let mut bad = 0usize;
    for _ in 0..2000 {
        let mut m = PhaseMachine::new(scale);
        let mut prev = m.phase();
        for _ in 0..60 {
            let events = Events { subgoal_done: rng.random_bool(0.1), task_done: rng.random_bool(0.05) };
            let before = m.phase();
            let Ok(r) = m.advance(rng.random_range(0.0..1.5), rng.random_range(0.0..=1.0), events) else {
                continue;
            };
            bad += usize::from(!(0.0..=1.0).contains(&r) || m.phase() < prev);
            prev = m.phase();
            let case = match (before, m.phase()) {
                (_, Completed) => 3,
                (Reaching, SubgoalJustReached) => 1,
                (Reaching, Reaching) => 0,
                _ => 2,
            };
            cases[case] += 1;
        }
    }
    check(bad == 0, "range and ordering");
    check(cases.iter().all(|&c| c > 0), "all four cases reached");
    let pass = failures.is_empty();
    verdict(pass, if pass { format!("all examples hold; case counts {cases:?}") } else { format!("failed: {failures:?}") })
}

// 3. Cumulative expert reward is strictly increasing; expert tracks its own flow.
fn monotone_expert() -> Result<Verdict> {
    let mut worst_track: f64 = 1.0;
    let mut violations = 0;
    for task in TaskKind::ALL {
        let mut env = Env::new(EnvConfig::new(task))?;
        for seed in 0..20 {
            let out = env.rollout(&mut ScriptedExpert::default(), seed)?;
            let mut total = 0.0;
            for o in &out {
                let next = total + o.reward;
                violations += usize::from(next <= total);
                total = next;
            }
            let tracking: Vec<f64> =
                out.iter().filter(|o| o.phase == RewardPhase::Tracking).map(|o| o.r_track).collect();
            ensure!(!tracking.is_empty(), "{task} seed {seed} never tracked");
            worst_track = worst_track.min(mean(&tracking));
        }
    }
    verdict(
        violations == 0 && worst_track >= 0.95,
        format!("{violations} non-increasing steps; lowest per-episode tracking mean {worst_track:.4}"),
    )
}

// 4. Mean per-step R_delta of expert flows against noised copies.
fn noise_ordering() -> Result<Verdict> {
    let presets = [
        ("gauss1", NoisePreset::SMALL_GAUSS),
        ("gauss4", NoisePreset::LARGE_GAUSS),
        ("drift1", NoisePreset::SMALL_DRIFT),
        ("drift2", NoisePreset::LARGE_DRIFT),
    ];
    let mut sums = [0.0; 4];
    let mut count = 0usize;
    for seed in 0..100u64 {
        let demo = default_demo(TaskKind::PickPlace, seed)?;
        let reference = demo.reference_flow()?;
        let clean = delta_flow(&reference)?;
        let mut scale = RewardScale::default();
        scale.c_rot = calibrate_rotation_scale(&reference, &clean)?;
        for (k, (_, preset)) in presets.iter().enumerate() {
            let noisy = perturb_flow(&reference, *preset, BASE_SIGMA, BASE_DRIFT, derive_seed(seed, "sim/noise", 0))?;
            let nd = delta_flow(&noisy)?;
            sums[k] += (0..clean.len()).map(|t| flow_match_reward(&nd.step(t), &clean.step(t), &scale)).sum::<f64>();
        }
        count += clean.len();
    }
    let m: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let pass = m[0] - m[1] >= 0.02 && m[2] - m[3] >= 0.02 && m[3] >= 0.5;
    verdict(
        pass,
        format!(
            "gauss1 {:.4} gauss4 {:.4} (gap {:.4}); drift1 {:.4} drift2 {:.4} (gap {:.4})",
            m[0],
            m[1],
            m[0] - m[1],
            m[2],
            m[3],
            m[2] - m[3]
        ),
    )
}

fn train_runs(config: &Path, out: &Path) -> Result<Vec<AblationRun>> {
    let config = ExperimentConfig::load(config)?;
    match commands::ablate(&config, out)? {
        Ablation::Train(runs) => Ok(runs),
        Ablation::Expert(_) => anyhow::bail!("expected a training ablation"),
    }
}

fn by_variant(runs: &[AblationRun]) -> BTreeMap<String, Vec<&AblationRun>> {
    let mut m: BTreeMap<String, Vec<&AblationRun>> = BTreeMap::new();
    for r in runs {
        m.entry(r.variant.label.clone()).or_default().push(r);
    }
    m
}

// 5. Desk-scale learning on pick-place against the sparse-only machine.
fn desk_learning(runs: &[AblationRun]) -> Result<Verdict> {
    let v = by_variant(runs);
    let flow = &v["reward=delta-flow"];
    let sparse = &v["reward=sparse-only"];
    let reached = flow.iter().filter(|r| r.run.curve.max_success() >= 0.8).count();
    let auc = |rs: &[&AblationRun]| mean(&rs.iter().map(|r| r.run.curve.auc()).collect::<Vec<_>>());
    let (fa, sa) = (auc(flow), auc(sparse));
    let maxes: Vec<String> = flow.iter().map(|r| format!("{:.2}", r.run.curve.max_success())).collect();
    verdict(
        reached >= 2 && fa > sa,
        format!("{reached}/3 seeds reach 0.8 (max success {}); auc flow {fa:.4} vs sparse {sa:.4}", maxes.join("/")),
    )
}

// 6. Representation ordering on pivot.
fn representation_ordering(runs: &[AblationRun]) -> Result<Verdict> {
    let v = by_variant(runs);
    let fin = |label: &str| mean(&v[label].iter().map(|r| r.run.curve.final_success()).collect::<Vec<_>>());
    let (flow, pose, endpoint) = (fin("reward=delta-flow"), fin("reward=pose-traj"), fin("reward=keypoint-endpoint"));
    verdict(
        flow >= endpoint && pose >= endpoint,
        format!("final success delta-flow {flow:.3}, pose-traj {pose:.3}, keypoint-endpoint {endpoint:.3}"),
    )
}

// 7a. Subsampled rigid flows keep their delta statistics.
fn keypoint_static() -> Result<Verdict> {
    let mut rng = stream(7, "acceptance/keypoints", 0);
    let mut errs: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for trial in 0..500u64 {
        let task = TaskKind::ALL[(trial % 4) as usize];
        let template: Vec<Vec2> = task.layout(trial).keypoints.iter().map(|&p| p * PIXELS_PER_UNIT).collect();
        let start = Vec2::new(rng.random_range(120.0..360.0), rng.random_range(120.0..360.0));
        let shift = Vec2::new(rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
        let turn = rng.random_range(-1.2..1.2);
        let frames: Vec<Vec<Vec2>> = (0..30)
            .map(|t| {
                let s = t as f64 / 29.0;
                template.iter().map(|&p| start + p.rotate(turn * s) + shift * s).collect()
            })
            .collect();
        let flow = KeypointFlow::fully_visible(frames)?;
        let full = delta_flow(&flow)?;
        for n in [32, 64] {
            let sub = delta_flow(&subsample(&flow, n, derive_seed(trial, "acceptance/subsample", n as u64))?)?;
            let rel = |num: f64, den: f64| (num / den).sqrt();
            let tr = rel(
                full.translations.iter().zip(&sub.translations).map(|(a, b)| (*a - *b).norm_sq()).sum(),
                full.translations.iter().map(|a| a.norm_sq()).sum(),
            );
            let rot = rel(
                full.rotations.iter().zip(&sub.rotations).map(|(a, b)| (a - b).powi(2)).sum(),
                full.rotations.iter().map(|a| a * a).sum(),
            );
            let e = errs.entry(n).or_default();
            e.0.push(tr);
            e.1.push(rot);
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, (tr, rot)) in &errs {
        let (mt, mr) = (mean(tr), mean(rot));
        pass &= mt <= 0.05 && mr <= 0.05;
        parts.push(format!("{n} points: translation {mt:.4}, rotation {mr:.4}"));
    }
    verdict(pass, format!("mean relative error over 500 trials; {}", parts.join("; ")))
}

// 7b. Learning-curve AUC across keypoint counts.
fn keypoint_learning(with_128: &[AblationRun], others: &[AblationRun]) -> Result<Verdict> {
    let mut aucs = BTreeMap::new();
    aucs.insert(128usize, mean(&by_variant(with_128)["reward=delta-flow"].iter().map(|r| r.run.curve.auc()).collect::<Vec<_>>()));
    for (label, rs) in by_variant(others) {
        let k = rs[0].variant.keypoints;
        ensure!(label.starts_with("keypoints="), "unexpected variant {label}");
        aucs.insert(k, mean(&rs.iter().map(|r| r.run.curve.auc()).collect::<Vec<_>>()));
    }
    let hi = aucs.values().cloned().fold(f64::MIN, f64::max);
    let lo = aucs.values().cloned().fold(f64::MAX, f64::min);
    let spread = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
    let listed: Vec<String> = aucs.iter().map(|(k, a)| format!("{k}: {a:.4}")).collect();
    verdict(spread <= 0.15, format!("mean auc {}; relative spread {spread:.3}", listed.join(", ")))
}

fn all_files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

// 8. Every command is byte-identical on rerun.
fn determinism() -> Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let cfg = tmp.path().join("small.toml");
    std::fs::write(
        &cfg,
        "task = \"pour\"\nseeds = [0, 1]\n[train]\nbatch_size = 32\nhidden = [16, 16]\nseed_frames = 300\n\
         exploration_steps = 100\ntotal_steps = 900\neval_every = 300\neval_episodes = 3\nreplay_capacity = 2000\n\
         [ablate]\nrewards = [\"delta-flow\", \"pose-traj\"]\n",
    )?;
    let expert_cfg = tmp.path().join("expert.toml");
    std::fs::write(
        &expert_cfg,
        "task = \"open\"\nseeds = [3]\n[ablate]\nmode = \"expert\"\nepisodes = 10\nnoise = [\"none\", \"gauss2-drift2\"]\n",
    )?;
    let run_all = |dir: &Path| -> Result<()> {
        let bin = env!("CARGO_BIN_EXE_deltaflow");
        let run = |args: Vec<String>| -> Result<()> {
            let out = Command::new(bin).args(&args).output()?;
            ensure!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            Ok(())
        };
        let s = |x: &Path| x.to_string_lossy().into_owned();
        let d = |sub: &str| s(&dir.join(sub));
        run(vec!["record-expert".into(), "--task".into(), "pivot".into(), "--seed".into(), "2".into(), "--out".into(), d("flows")])?;
        let flow = dir.join("flows/pivot-seed2.flow.json");
        run(vec!["perturb".into(), s(&flow), "--noise".into(), "gauss2-drift1".into(), "--seed".into(), "5".into(), "--out".into(), d("flows")])?;
        let noisy = dir.join("flows/pivot-seed2.gauss2-drift1.seed5.flow.json");
        run(vec!["score".into(), s(&noisy), s(&flow), "--out".into(), d("score")])?;
        run(vec!["train".into(), "--config".into(), s(&cfg), "--out".into(), d("train")])?;
        run(vec!["evaluate".into(), "--config".into(), s(&cfg), "--checkpoint".into(), d("train/checkpoints/seed1.json"), "--episodes".into(), "5".into(), "--out".into(), d("eval")])?;
        run(vec!["ablate".into(), "--config".into(), s(&cfg), "--out".into(), d("ablate")])?;
        run(vec!["ablate".into(), "--config".into(), s(&expert_cfg), "--out".into(), d("expert")])?;
        Ok(())
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_all(&a)?;
    run_all(&b)?;
    let (fa, fb) = (all_files(&a), all_files(&b));
    let csvs = fa.keys().filter(|p| p.extension().is_some_and(|e| e == "csv")).count();
    let differing: Vec<String> =
        fa.iter().filter(|(k, v)| fb.get(*k) != Some(v)).map(|(k, _)| k.display().to_string()).collect();
    let pass = differing.is_empty() && fa.len() == fb.len() && csvs >= 8;
    verdict(pass, format!("{} files ({csvs} CSV) compared; differing {differing:?}", fa.len()))
}

fn run_criterion(n: u32, name: &str, budget: Duration, f: impl FnOnce() -> Result<Verdict>) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(Ok(v)) => (v.pass && elapsed <= budget, v.detail),
        Ok(Err(e)) => (false, format!("error: {e:#}")),
        Err(_) => (false, "panicked".to_string()),
    };
    let line = format!(
        "criterion {n} {}: {name}: {detail} [{:.1}s of {}s]\n",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

#[test]
fn acceptance_criteria() {
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let mut results = Vec::new();
    results.push(run_criterion(1, "delta-flow oracle", Duration::from_secs(10), rigid_oracle));
    results.push(run_criterion(2, "reward formulas", Duration::from_secs(5), reward_suite));
    results.push(run_criterion(3, "monotone expert reward", Duration::from_secs(30), monotone_expert));
    results.push(run_criterion(4, "noise robustness ordering", minutes(1), noise_ordering));

    let tmp = tempfile::tempdir().unwrap();
    let mut pick_runs = Vec::new();
    results.push(run_criterion(5, "desk-scale learning", minutes(30), || {
        pick_runs = train_runs(&configs_dir().join("pick_place_rewards.toml"), &tmp.path().join("c5"))?;
        desk_learning(&pick_runs)
    }));
    results.push(run_criterion(6, "representation ordering", minutes(45), || {
        let runs = train_runs(&configs_dir().join("pivot_representations.toml"), &tmp.path().join("c6"))?;
        representation_ordering(&runs)
    }));
    let static_ok = run_criterion(7, "keypoint insensitivity (static)", Duration::from_secs(10), keypoint_static);
    let learning_ok = run_criterion(7, "keypoint insensitivity (learning)", minutes(30), || {
        ensure!(!pick_runs.is_empty(), "criterion 5 runs are required for the 128-point curve");
        let mut config = ExperimentConfig::load(configs_dir().join("keypoints.toml"))?;
        if let Some(a) = config.ablate.as_mut() {
            a.keypoints.retain(|&k| k != 128);
        }
        let others = match commands::ablate(&config, &tmp.path().join("c7"))? {
            Ablation::Train(runs) => runs,
            Ablation::Expert(_) => anyhow::bail!("expected a training ablation"),
        };
        keypoint_learning(&pick_runs, &others)
    });
    results.push(static_ok && learning_ok);
    results.push(run_criterion(8, "determinism", minutes(5), determinism));

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
