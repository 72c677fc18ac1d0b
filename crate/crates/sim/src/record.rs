//! Episode records and synthetic scene flows for the preprocessing pipeline.

use std::path::Path;

use deltaflow_core::pipeline::MaskSet;
use deltaflow_core::rng::stream;
use deltaflow_core::{KeypointFlow, RewardPhase, Vec2, CANVAS_SIZE};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Env, Policy};
use crate::error::Result;
use crate::expert::ExpertDemo;
use crate::geometry::inside_convex;
use crate::task::TaskKind;
use crate::tracker::to_pixels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: [f64; 4],
    pub reward: f64,
    pub r_track: f64,
    pub subgoal_done: bool,
    pub task_done: bool,
    pub phase: RewardPhase,
    pub flow_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub task: TaskKind,
    pub seed: u64,
    pub success: bool,
    pub total_reward: f64,
    pub steps: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Rolls out `policy` for one episode and records every step.
pub fn record_episode(env: &mut Env, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeRecord> {
    env.reset(seed)?;
    let mut steps = Vec::new();
    loop {
        let action = policy.act(env);
        let o = env.step(&action)?;
        steps.push(StepRecord {
            step: steps.len() + 1,
            action: action.clamped().to_array(),
            reward: o.reward,
            r_track: o.r_track,
            subgoal_done: o.events.subgoal_done,
            task_done: o.events.task_done,
            phase: o.phase,
            flow_index: o.flow_index,
        });
        if o.done {
            return Ok(EpisodeRecord {
                task: env.config().task,
                seed,
                success: o.success,
                total_reward: steps.iter().map(|s| s.reward).sum(),
                steps,
            });
        }
    }
}

/// Static background points in a scene flow.
pub const SCENE_BACKGROUND_POINTS: usize = 32;
/// Points tracked on the robot arm.
pub const SCENE_ROBOT_POINTS: usize = 24;
/// Half side of the square robot mask region, pixels.
pub const ROBOT_MASK_HALF: f64 = 60.0;
pub const ROBOT_LABEL: u16 = 2;
pub const OBJECT_LABEL: u16 = 1;

/// A whole-scene flow as a point tracker would return it before filtering:
/// object keypoints first, then static background points, then points on the
/// robot. The mask marks the object and a large robot region in frame 0.
#[derive(Debug, Clone)]
pub struct SceneFlow {
    pub flow: KeypointFlow,
    pub masks: MaskSet,
    /// Number of leading columns that belong to the object.
    pub object_points: usize,
}

pub fn scene_flow(demo: &ExpertDemo) -> Result<SceneFlow> {
    let frames = demo.flow.frames();
    let n_obj = demo.flow.keypoints();
    let mut rng = stream(demo.seed, "sim/scene", 0);
    let canvas = CANVAS_SIZE as f64;
    let background: Vec<Vec2> = (0..SCENE_BACKGROUND_POINTS)
        .map(|_| Vec2::new(rng.random_range(0.0..canvas), rng.random_range(0.0..canvas)))
        .collect();
    let ring: Vec<Vec2> = (0..SCENE_ROBOT_POINTS)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / SCENE_ROBOT_POINTS as f64;
            Vec2::new(a.cos(), a.sin()) * (10.0 + 20.0 * (i % 2) as f64)
        })
        .collect();
    let mut positions = Vec::with_capacity(frames);
    let mut visibility = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut row = demo.flow.frame(t).to_vec();
        let mut vis = demo.flow.frame_visibility(t).to_vec();
        row.extend(&background);
        let g = to_pixels(demo.gripper_path[t].position);
        row.extend(ring.iter().map(|&r| g + r));
        vis.resize(row.len(), true);
        positions.push(row);
        visibility.push(vis);
    }
    let flow = KeypointFlow::from_frames(positions, visibility)?;

    let size = CANVAS_SIZE as usize;
    let mut labels = vec![0u16; size * size];
    let g0 = to_pixels(demo.gripper_path[0].position);
    let outline: Vec<Vec2> = object_outline_px(demo);
    for y in 0..size {
        for x in 0..size {
            let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let label = if inside_convex(&outline, p) {
                OBJECT_LABEL
            } else if (p.x - g0.x).abs() <= ROBOT_MASK_HALF && (p.y - g0.y).abs() <= ROBOT_MASK_HALF {
                ROBOT_LABEL
            } else {
                0
            };
            labels[y * size + x] = label;
        }
    }
    let masks = MaskSet::from_labels(CANVAS_SIZE, CANVAS_SIZE, labels)?;
    Ok(SceneFlow { flow, masks, object_points: n_obj })
}

fn object_outline_px(demo: &ExpertDemo) -> Vec<Vec2> {
    let layout = demo.task.layout(demo.seed);
    layout.outline.iter().map(|&v| to_pixels(layout.object.apply(v))).collect()
}
