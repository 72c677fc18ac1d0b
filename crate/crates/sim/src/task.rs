//! Task definitions and seeded initial placements.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use deltaflow_core::{rng, Vec2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geometry::{perimeter_points, Pose};

/// Body-frame keypoints tracked on every object.
pub const TEMPLATE_KEYPOINTS: usize = 128;
/// Grip (or contact) capture radius around the handle point, world units.
pub const CAPTURE_RADIUS: f64 = 0.04;
/// A drawer or pivot contact breaks beyond this gripper-handle distance.
pub const HOLD_RADIUS: f64 = 0.07;

pub const PLACE_RADIUS: f64 = 0.05;
pub const POUR_RADIUS: f64 = 0.06;
/// Pour succeeds with the cup heading strictly inside this interval.
pub const POUR_HEADING: (f64, f64) = (5.0 * PI / 16.0, 7.0 * PI / 16.0);
/// Drawer displacement that counts as open, world units.
pub const OPEN_DISTANCE: f64 = 0.1;
pub const DRAWER_TRAVEL: f64 = 0.2;
/// Bar lift angle that completes the pivot task.
pub const PIVOT_ANGLE: f64 = PI / 3.0;
pub const PIVOT_MAX_ANGLE: f64 = PI / 2.0;

/// Pick-place object start rectangle: `(x range, y range)`.
pub const PICK_START: ((f64, f64), (f64, f64)) = ((0.2, 0.4), (0.35, 0.6));
pub const PICK_TARGET: ((f64, f64), (f64, f64)) = ((0.6, 0.8), (0.35, 0.75));

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskKind {
    PickPlace,
    Pour,
    Open,
    Pivot,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::PickPlace, TaskKind::Pour, TaskKind::Open, TaskKind::Pivot];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::PickPlace => "pick-place",
            TaskKind::Pour => "pour",
            TaskKind::Open => "open",
            TaskKind::Pivot => "pivot",
        }
    }

    /// Whether the subgoal is a grasp (grip closed) rather than a touch.
    pub fn needs_grasp(self) -> bool {
        !matches!(self, TaskKind::Pivot)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| SimError::UnknownTask(s.to_string()))
    }
}

impl TryFrom<String> for TaskKind {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, SimError> {
        s.parse()
    }
}

impl From<TaskKind> for String {
    fn from(t: TaskKind) -> String {
        t.name().to_string()
    }
}

/// A wall segment plus the camera position used for occlusion tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wall {
    pub bottom: Vec2,
    pub top: Vec2,
    pub camera: Vec2,
}

impl Wall {
    pub fn x(&self) -> f64 {
        self.bottom.x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Goal {
    Place { target: Vec2 },
    Pour { target: Vec2 },
    Open { axis: Vec2 },
    Pivot,
}

/// Everything that `reset` randomizes.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskLayout {
    pub task: TaskKind,
    pub gripper: Pose,
    pub object: Pose,
    /// Counter-clockwise body-frame outline.
    pub outline: Vec<Vec2>,
    pub keypoints: Vec<Vec2>,
    /// Body-frame point the gripper must reach.
    pub handle: Vec2,
    pub goal: Goal,
    pub wall: Option<Wall>,
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2> {
    vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)]
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    rng.random_range(lo..hi)
}

pub const PIVOT_FLOOR: f64 = 0.2;
pub const PIVOT_WALL_X: f64 = 0.7;
pub const PIVOT_BAR_THICKNESS: f64 = 0.04;

impl TaskKind {
    pub fn layout(self, seed: u64) -> TaskLayout {
        let mut rng = rng::stream(seed, "sim/layout", self as u64);
        match self {
            TaskKind::PickPlace => {
                let object = Pose::new(uniform(&mut rng, PICK_START.0), uniform(&mut rng, PICK_START.1), 0.0);
                let target = Vec2::new(uniform(&mut rng, PICK_TARGET.0), uniform(&mut rng, PICK_TARGET.1));
                let outline = rect(-0.04, -0.04, 0.04, 0.04);
                TaskLayout {
                    task: self,
                    gripper: Pose::new(0.5, 0.12, 0.0),
                    object,
                    keypoints: perimeter_points(&outline, TEMPLATE_KEYPOINTS),
                    outline,
                    handle: Vec2::ZERO,
                    goal: Goal::Place { target },
                    wall: None,
                }
            }
            TaskKind::Pour => {
                let object = Pose::new(uniform(&mut rng, (0.25, 0.4)), uniform(&mut rng, (0.3, 0.5)), 0.0);
                let target = Vec2::new(uniform(&mut rng, (0.55, 0.75)), uniform(&mut rng, (0.55, 0.75)));
                let outline = rect(-0.03, -0.05, 0.03, 0.05);
                TaskLayout {
                    task: self,
                    gripper: Pose::new(0.5, 0.12, 0.0),
                    object,
                    keypoints: perimeter_points(&outline, TEMPLATE_KEYPOINTS),
                    outline,
                    handle: Vec2::ZERO,
                    goal: Goal::Pour { target },
                    wall: None,
                }
            }
            TaskKind::Open => {
                let object = Pose::new(uniform(&mut rng, (0.5, 0.65)), uniform(&mut rng, (0.35, 0.65)), 0.0);
                let outline = rect(-0.08, -0.04, 0.08, 0.04);
                TaskLayout {
                    task: self,
                    gripper: Pose::new(uniform(&mut rng, (0.2, 0.35)), 0.12, 0.0),
                    object,
                    keypoints: perimeter_points(&outline, TEMPLATE_KEYPOINTS),
                    outline,
                    handle: Vec2::new(-0.08, 0.0),
                    goal: Goal::Open { axis: Vec2::new(-1.0, 0.0) },
                    wall: None,
                }
            }
            TaskKind::Pivot => {
                let length = uniform(&mut rng, (0.2, 0.26));
                let gripper = Pose::new(uniform(&mut rng, (0.25, 0.45)), uniform(&mut rng, (0.45, 0.6)), 0.0);
                let outline = rect(-length, 0.0, 0.0, PIVOT_BAR_THICKNESS);
                TaskLayout {
                    task: self,
                    gripper,
                    object: Pose::new(PIVOT_WALL_X, PIVOT_FLOOR, 0.0),
                    keypoints: perimeter_points(&outline, TEMPLATE_KEYPOINTS),
                    outline,
                    handle: Vec2::new(-length + 0.02, PIVOT_BAR_THICKNESS),
                    goal: Goal::Pivot,
                    wall: Some(Wall {
                        bottom: Vec2::new(PIVOT_WALL_X, PIVOT_FLOOR),
                        top: Vec2::new(PIVOT_WALL_X, PIVOT_FLOOR + 0.1),
                        camera: Vec2::new(PIVOT_WALL_X + 0.25, 0.9),
                    }),
                }
            }
        }
    }
}
