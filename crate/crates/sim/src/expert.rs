//! Scripted waypoint experts. Their rollouts, tracked by the oracle, stand
//! in for generated reference flows.

use std::f64::consts::PI;

use deltaflow_core::reward::PlanarPose;
use deltaflow_core::{KeypointFlow, Vec2};

use crate::error::{Result, SimError};
use crate::geometry::Pose;
use crate::task::{Goal, TaskKind, PIVOT_ANGLE, PIVOT_FLOOR, PIVOT_WALL_X};
use crate::tracker::{oracle_track, to_pixels};
use crate::world::{wrap_angle, Action, World, MAX_ROTATION, MAX_TRANSLATION};
use crate::{ACTION_REPEAT, MAX_EPISODE_STEPS};

/// Drawer displacement the expert aims for.
const OPEN_TARGET: f64 = 0.13;
/// Bar angle the expert aims for.
const PIVOT_TARGET: f64 = PIVOT_ANGLE + 0.12;
/// Bearing step the pivot expert aims ahead, radians.
const PIVOT_SWEEP: f64 = 0.2;
const POUR_TARGET_HEADING: f64 = 3.0 * PI / 8.0;

/// A hand-designed controller with privileged access to the world state.
#[derive(Debug, Clone, Copy)]
pub struct ScriptedExpert {
    /// Fraction of the action limit the expert uses.
    pub speed: f64,
}

impl Default for ScriptedExpert {
    fn default() -> Self {
        Self { speed: 0.6 }
    }
}

impl ScriptedExpert {
    fn toward(&self, delta: Vec2) -> Vec2 {
        let a = delta / (ACTION_REPEAT as f64 * MAX_TRANSLATION);
        let n = a.norm();
        if n > self.speed {
            a * (self.speed / n)
        } else {
            a
        }
    }

    fn turn(&self, delta: f64) -> f64 {
        (delta / (ACTION_REPEAT as f64 * MAX_ROTATION)).clamp(-self.speed, self.speed)
    }

    pub fn act(&self, world: &World) -> Action {
        let gripper = world.gripper().position;
        let handle = world.handle();
        let reach = |grip: f64| {
            let m = self.toward(handle - gripper);
            let close = world.grip_distance() < 0.02;
            Action::new(m.x, m.y, 0.0, if close { grip } else { -1.0 })
        };
        match world.layout().goal {
            Goal::Place { target } => {
                if !world.attached() {
                    return reach(1.0);
                }
                let m = self.toward(target - world.object().position);
                Action::new(m.x, m.y, 0.0, 1.0)
            }
            Goal::Pour { target } => {
                if !world.attached() {
                    return reach(1.0);
                }
                let m = self.toward(target - world.object().position);
                let h = self.turn(POUR_TARGET_HEADING - wrap_angle(world.object().heading));
                Action::new(m.x, m.y, h, 1.0)
            }
            Goal::Open { axis } => {
                if !world.attached() {
                    return reach(1.0);
                }
                let closed_handle = world.layout().object.apply(world.layout().handle);
                let m = self.toward(closed_handle + axis * OPEN_TARGET - gripper);
                Action::new(m.x, m.y, 0.0, 1.0)
            }
            Goal::Pivot => {
                if !world.attached() {
                    let m = self.toward(handle - gripper);
                    return Action::new(m.x, m.y, 0.0, -1.0);
                }
                if world.pivot_angle() >= PIVOT_TARGET {
                    return Action::new(0.0, 0.0, 0.0, -1.0);
                }
                // sweep clockwise about the pivot at the handle's radius
                let base = Vec2::new(PIVOT_WALL_X, PIVOT_FLOOR);
                let radius = (handle - base).norm();
                let arm = gripper - base;
                let sweep = PIVOT_SWEEP.min(PIVOT_TARGET - world.pivot_angle() + 0.02);
                let lead = base + arm.rotate(-sweep) * (radius / arm.norm());
                let m = self.toward(lead - gripper);
                Action::new(m.x, m.y, 0.0, -1.0)
            }
        }
    }
}

/// A recorded expert episode.
#[derive(Debug, Clone)]
pub struct ExpertDemo {
    pub task: TaskKind,
    pub seed: u64,
    pub actions: Vec<Action>,
    /// Oracle-tracked flow of every template keypoint, `steps + 1` frames.
    pub flow: KeypointFlow,
    /// Object pose per frame, pixels and radians.
    pub poses: Vec<PlanarPose>,
    /// Gripper pose per frame, world units.
    pub gripper_path: Vec<Pose>,
    /// Step (1-based) during which the subgoal was first reached.
    pub subgoal_step: usize,
    /// First step (1-based) after which the task was complete.
    pub success_step: usize,
}

impl ExpertDemo {
    /// Frame from which the object-centric reference starts: the last frame
    /// before the subgoal step.
    pub fn contact_frame(&self) -> usize {
        self.subgoal_step - 1
    }

    /// The flow from the contact frame on.
    pub fn reference_flow(&self) -> Result<KeypointFlow> {
        let c = self.contact_frame();
        let frames = (c..self.flow.frames()).map(|t| self.flow.frame(t).to_vec()).collect();
        let vis = (c..self.flow.frames()).map(|t| self.flow.frame_visibility(t).to_vec()).collect();
        Ok(KeypointFlow::from_frames(frames, vis)?)
    }
}

pub(crate) fn planar_pose(world: &World) -> PlanarPose {
    PlanarPose {
        position: to_pixels(world.object().position),
        heading: world.object().heading,
    }
}

/// Rolls out the scripted expert for `steps` policy steps from the seeded
/// layout. The expert holds still once done, so the flow always has
/// `steps + 1` frames.
pub fn scripted_expert(task: TaskKind, seed: u64, steps: usize) -> Result<ExpertDemo> {
    let expert = ScriptedExpert::default();
    let mut world = World::new(task.layout(seed));
    let (p0, v0) = oracle_track(&world);
    let mut frames = vec![p0];
    let mut visibility = vec![v0];
    let mut poses = vec![planar_pose(&world)];
    let mut gripper_path = vec![world.gripper()];
    let mut actions = Vec::with_capacity(steps);
    let mut success_step = None;
    let mut subgoal_step = None;
    for step in 1..=steps {
        let action = expert.act(&world);
        if world.step(&action, ACTION_REPEAT)? {
            subgoal_step = Some(step);
        }
        actions.push(action);
        let (p, v) = oracle_track(&world);
        frames.push(p);
        visibility.push(v);
        poses.push(planar_pose(&world));
        gripper_path.push(world.gripper());
        if success_step.is_none() && world.success() {
            success_step = Some(step);
        }
    }
    let fail = |reason: String| SimError::ScriptFailure { task: task.to_string(), seed, reason };
    let subgoal_step = subgoal_step.ok_or_else(|| fail("subgoal never reached".into()))?;
    let success_step = success_step.ok_or_else(|| fail(format!("task not complete after {steps} steps")))?;
    Ok(ExpertDemo {
        task,
        seed,
        actions,
        flow: KeypointFlow::from_frames(frames, visibility)?,
        poses,
        gripper_path,
        subgoal_step,
        success_step,
    })
}

/// [`scripted_expert`] with the default episode length.
pub fn default_demo(task: TaskKind, seed: u64) -> Result<ExpertDemo> {
    scripted_expert(task, seed, MAX_EPISODE_STEPS)
}
