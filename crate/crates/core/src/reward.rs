//! Flow-matching dense reward, the four-phase hybrid reward machine, and the
//! baseline reward representations it is compared against.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{align_flow_index, DeltaFlow, DeltaStep, KeypointFlow, MIN_VISIBLE};
use crate::geometry::Vec2;

pub const ALPHA: f64 = 0.25;
pub const BETA: f64 = 0.75;
pub const TAU: f64 = 10.0;
/// Translation scale: (10% of the canvas width)², pixels².
pub const DEFAULT_C_TR: f64 = 48.0 * 48.0;
/// Rotation scale used when no reference flow is available to calibrate, pixels⁴.
pub const DEFAULT_C_ROT: f64 = 250_000.0;
/// Heading scale for the pose-trajectory baseline, rad².
pub const DEFAULT_C_HEADING: f64 = (PI / 4.0) * (PI / 4.0);

/// Scales and weights of the reward model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScale {
    pub c_tr: f64,
    pub c_rot: f64,
    pub c_heading: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl Default for RewardScale {
    fn default() -> Self {
        Self {
            c_tr: DEFAULT_C_TR,
            c_rot: DEFAULT_C_ROT,
            c_heading: DEFAULT_C_HEADING,
            alpha: ALPHA,
            beta: BETA,
            tau: TAU,
        }
    }
}

impl RewardScale {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_tr > 0.0
            && self.c_rot > 0.0
            && self.c_heading > 0.0
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta <= 1.0
            && self.tau > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid reward scale {self:?}")))
        }
    }

    /// Copy with `c_rot` calibrated against a reference flow, see
    /// [`calibrate_rotation_scale`].
    pub fn calibrated(mut self, reference: &KeypointFlow, delta: &DeltaFlow) -> Result<Self> {
        self.c_rot = calibrate_rotation_scale(reference, delta)?;
        Ok(self)
    }
}

/// Mean squared distance of the first-frame visible keypoints from their
/// centroid, pixels².
pub fn keypoint_spread(flow: &KeypointFlow) -> Result<f64> {
    let pts = flow.frame(0);
    let vis = flow.frame_visibility(0);
    let c = crate::flow::centroid(pts, vis, MIN_VISIBLE)?;
    let (sum, n) = pts
        .iter()
        .zip(vis)
        .filter(|(_, &v)| v)
        .fold((0.0, 0usize), |(s, n), (&p, _)| (s + (p - c).norm_sq(), n + 1));
    Ok(sum / n as f64)
}

/// Rotation scale for one reference flow: the 90th percentile of `δ_rot²`
/// along the flow, floored at `(spread / 4)²` so flows that never rotate
/// still get a finite, shape-relative tolerance.
pub fn calibrate_rotation_scale(reference: &KeypointFlow, delta: &DeltaFlow) -> Result<f64> {
    let spread = keypoint_spread(reference)?;
    let mut squares: Vec<f64> = delta.rotations.iter().map(|r| r * r).collect();
    squares.sort_by(f64::total_cmp);
    let rank = ((0.9 * squares.len() as f64).ceil() as usize).clamp(1, squares.len());
    let p90 = squares[rank - 1];
    let floor = (0.25 * spread).powi(2);
    Ok(p90.max(floor).max(f64::MIN_POSITIVE))
}

fn clipped_quadratic(cost: f64) -> f64 {
    1.0 - cost.clamp(0.0, 1.0)
}

/// `1 - clip(|Δtr|²/c_tr + Δrot²/c_rot, 0, 1)`.
pub fn flow_match_reward(robot: &DeltaStep, generated: &DeltaStep, scale: &RewardScale) -> f64 {
    let tr = (robot.translation - generated.translation).norm_sq() / scale.c_tr;
    let dr = robot.rotation - generated.rotation;
    let cost = tr + dr * dr / scale.c_rot;
    if cost.is_nan() {
        return 0.0;
    }
    clipped_quadratic(cost)
}

/// `1 - tanh(tau * d_grip)`, with `d_grip` in canvas-width units.
pub fn reaching_reward(d_grip: f64, tau: f64) -> f64 {
    1.0 - (tau * d_grip.max(0.0)).tanh()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardPhase {
    Reaching,
    SubgoalJustReached,
    Tracking,
    Completed,
}

/// What happened during one environment step.
///
/// `subgoal_done` is an edge: it fires on the single step the grasp or
/// contact subgoal is first achieved. `task_done` is a level and may stay
/// set after completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Events {
    pub subgoal_done: bool,
    pub task_done: bool,
}

/// One step of the hybrid reward machine. Returns the reward and next phase.
///
/// `r_track` is the tracking term (`R_δ` for the flow reward, or a baseline
/// representation's value); pass 0 for the sparse-only machine.
pub fn hybrid_reward(
    phase: RewardPhase,
    d_grip: f64,
    r_track: f64,
    events: Events,
    scale: &RewardScale,
) -> Result<(f64, RewardPhase)> {
    if !(0.0..=1.0).contains(&r_track) {
        return Err(Error::InvalidParameter(format!(
            "tracking reward must lie in [0, 1], got {r_track}"
        )));
    }
    use RewardPhase::*;
    match phase {
        Completed => Ok((1.0, Completed)),
        Reaching => {
            if events.task_done && !events.subgoal_done {
                return Err(Error::IllegalTransition(
                    "task completed before the subgoal was reached".into(),
                ));
            }
            if events.task_done {
                Ok((1.0, Completed))
            } else if events.subgoal_done {
                Ok((scale.alpha, SubgoalJustReached))
            } else {
                Ok((scale.alpha * reaching_reward(d_grip, scale.tau), Reaching))
            }
        }
        SubgoalJustReached | Tracking => {
            if events.subgoal_done {
                return Err(Error::IllegalTransition(format!(
                    "subgoal event fired again in phase {phase:?}"
                )));
            }
            if events.task_done {
                Ok((1.0, Completed))
            } else {
                Ok(((scale.alpha + scale.beta * r_track).min(1.0), Tracking))
            }
        }
    }
}

/// Owns the phase of one episode.
#[derive(Debug, Clone)]
pub struct PhaseMachine {
    phase: RewardPhase,
    scale: RewardScale,
}

impl PhaseMachine {
    pub fn new(scale: RewardScale) -> Self {
        Self {
            phase: RewardPhase::Reaching,
            scale,
        }
    }

    pub fn phase(&self) -> RewardPhase {
        self.phase
    }

    pub fn scale(&self) -> &RewardScale {
        &self.scale
    }

    pub fn advance(&mut self, d_grip: f64, r_track: f64, events: Events) -> Result<f64> {
        let (reward, next) = hybrid_reward(self.phase, d_grip, r_track, events, &self.scale)?;
        self.phase = next;
        Ok(reward)
    }
}

/// Planar object pose in canvas pixels and radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanarPose {
    pub position: Vec2,
    pub heading: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Clipped-quadratic match of two poses: position error over `c_tr` plus
/// wrapped heading error over `c_heading`.
pub fn pose_match_reward(robot: &PlanarPose, expert: &PlanarPose, scale: &RewardScale) -> f64 {
    let dp = (robot.position - expert.position).norm_sq() / scale.c_tr;
    let dh = wrap_angle(robot.heading - expert.heading);
    clipped_quadratic(dp + dh * dh / scale.c_heading)
}

/// Per-step pose-trajectory reward, mapping each robot step onto the expert
/// trajectory with [`align_flow_index`].
pub fn pose_trajectory_reward(
    robot: &[PlanarPose],
    expert: &[PlanarPose],
    scale: &RewardScale,
) -> Result<Vec<f64>> {
    robot
        .iter()
        .enumerate()
        .map(|(t, r)| {
            let j = align_flow_index(t, robot.len(), expert.len())?;
            Ok(pose_match_reward(r, &expert[j], scale))
        })
        .collect()
}

/// Clipped-quadratic reward on the mean squared final-position error of
/// matched keypoints. No temporal information is used.
pub fn keypoint_endpoint_reward(
    robot_final: &[Vec2],
    expert_final: &[Vec2],
    scale: &RewardScale,
) -> Result<f64> {
    if robot_final.len() != expert_final.len() || robot_final.is_empty() {
        return Err(Error::CountMismatch {
            robot: robot_final.len(),
            expert: expert_final.len(),
        });
    }
    let mse = robot_final
        .iter()
        .zip(expert_final)
        .map(|(&a, &b)| (a - b).norm_sq())
        .sum::<f64>()
        / robot_final.len() as f64;
    Ok(clipped_quadratic(mse / scale.c_tr))
}

/// Which representation drives the tracking term of the reward machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RewardVariant {
    DeltaFlow,
    PoseTraj,
    KeypointEndpoint,
    SparseOnly,
}

impl RewardVariant {
    pub const ALL: [RewardVariant; 4] = [
        RewardVariant::DeltaFlow,
        RewardVariant::PoseTraj,
        RewardVariant::KeypointEndpoint,
        RewardVariant::SparseOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardVariant::DeltaFlow => "delta-flow",
            RewardVariant::PoseTraj => "pose-traj",
            RewardVariant::KeypointEndpoint => "keypoint-endpoint",
            RewardVariant::SparseOnly => "sparse-only",
        }
    }
}

impl fmt::Display for RewardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

impl TryFrom<String> for RewardVariant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RewardVariant> for String {
    fn from(v: RewardVariant) -> String {
        v.name().to_string()
    }
}
