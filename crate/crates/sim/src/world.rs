//! Kinematic world state and integration.

use std::f64::consts::PI;

use deltaflow_core::Vec2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::Pose;
use crate::task::{
    Goal, TaskKind, TaskLayout, Wall, CAPTURE_RADIUS, DRAWER_TRAVEL, HOLD_RADIUS, OPEN_DISTANCE, PIVOT_ANGLE,
    PIVOT_BAR_THICKNESS, PIVOT_FLOOR, PIVOT_MAX_ANGLE, PLACE_RADIUS, POUR_HEADING, POUR_RADIUS,
};

/// Largest gripper translation per substep and axis, world units.
pub const MAX_TRANSLATION: f64 = 0.015;
/// Largest gripper rotation per substep, radians.
pub const MAX_ROTATION: f64 = 0.06;
/// Clearance kept between the pivot bar and the wall.
pub const WALL_GAP: f64 = 0.002;
const WORKSPACE: (f64, f64) = (0.02, 0.98);

/// A policy action. Every component lives in `[-1, 1]`; `grip > 0` closes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub grip: f64,
}

impl Action {
    pub const DIM: usize = 4;

    pub const fn new(dx: f64, dy: f64, dtheta: f64, grip: f64) -> Self {
        Self { dx, dy, dtheta, grip }
    }

    pub fn from_slice(v: &[f32]) -> Self {
        Self::new(v[0] as f64, v[1] as f64, v[2] as f64, v[3] as f64)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.dx, self.dy, self.dtheta, self.grip]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn clamped(self) -> Self {
        let c = |v: f64| v.clamp(-1.0, 1.0);
        Self::new(c(self.dx), c(self.dy), c(self.dtheta), c(self.grip))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Attachment {
    Free,
    Rigid { offset: Pose },
    Drawer { start: f64, grip_at_grasp: Vec2 },
    Contact { start: f64, bearing_at_contact: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    layout: TaskLayout,
    gripper: Pose,
    grip_closed: bool,
    object: Pose,
    attachment: Attachment,
    drawer_offset: f64,
    pivot_angle: f64,
    subgoal_reached: bool,
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn pivot_pose(angle: f64) -> Pose {
    let wall_x = crate::task::PIVOT_WALL_X - WALL_GAP;
    Pose::new(wall_x - PIVOT_BAR_THICKNESS * angle.sin(), PIVOT_FLOOR, -angle)
}

impl World {
    pub fn new(layout: TaskLayout) -> Self {
        let object = if layout.task == TaskKind::Pivot {
            pivot_pose(0.0)
        } else {
            layout.object
        };
        let mut world = Self {
            gripper: layout.gripper,
            grip_closed: false,
            object,
            attachment: Attachment::Free,
            drawer_offset: 0.0,
            pivot_angle: 0.0,
            subgoal_reached: false,
            layout,
        };
        world.project_out_of_wall();
        world
    }

    pub fn task(&self) -> TaskKind {
        self.layout.task
    }

    pub fn layout(&self) -> &TaskLayout {
        &self.layout
    }

    pub fn gripper(&self) -> Pose {
        self.gripper
    }

    pub fn grip_closed(&self) -> bool {
        self.grip_closed
    }

    pub fn object(&self) -> Pose {
        self.object
    }

    pub fn attached(&self) -> bool {
        self.attachment != Attachment::Free
    }

    pub fn subgoal_reached(&self) -> bool {
        self.subgoal_reached
    }

    pub fn drawer_offset(&self) -> f64 {
        self.drawer_offset
    }

    pub fn pivot_angle(&self) -> f64 {
        self.pivot_angle
    }

    pub fn wall(&self) -> Option<&Wall> {
        self.layout.wall.as_ref()
    }

    pub fn handle(&self) -> Vec2 {
        self.object.apply(self.layout.handle)
    }

    /// Gripper-to-handle distance in world (canvas-width) units.
    pub fn grip_distance(&self) -> f64 {
        self.gripper.position.distance(self.handle())
    }

    pub fn object_outline(&self) -> Vec<Vec2> {
        self.layout.outline.iter().map(|&p| self.object.apply(p)).collect()
    }

    pub fn object_keypoints(&self) -> Vec<Vec2> {
        self.layout.keypoints.iter().map(|&p| self.object.apply(p)).collect()
    }

    pub fn success(&self) -> bool {
        match self.layout.goal {
            Goal::Place { target } => self.object.position.distance(target) <= PLACE_RADIUS,
            Goal::Pour { target } => {
                let h = wrap_angle(self.object.heading);
                self.object.position.distance(target) <= POUR_RADIUS && h > POUR_HEADING.0 && h < POUR_HEADING.1
            }
            Goal::Open { .. } => self.drawer_offset >= OPEN_DISTANCE,
            Goal::Pivot => self.pivot_angle >= PIVOT_ANGLE,
        }
    }

    /// Runs `repeat` substeps. Returns whether the subgoal was reached for the
    /// first time during this step.
    pub fn step(&mut self, action: &Action, repeat: usize) -> Result<bool> {
        if !action.is_finite() {
            return Err(SimError::InvalidAction);
        }
        let action = action.clamped();
        let mut first = false;
        for _ in 0..repeat {
            first |= self.substep(&action);
        }
        Ok(first)
    }

    fn substep(&mut self, action: &Action) -> bool {
        let needs_grasp = self.layout.task.needs_grasp();
        self.grip_closed = action.grip > 0.0;
        if needs_grasp && !self.grip_closed {
            self.attachment = Attachment::Free;
        }

        let p = &mut self.gripper.position;
        p.x = (p.x + action.dx * MAX_TRANSLATION).clamp(WORKSPACE.0, WORKSPACE.1);
        p.y = (p.y + action.dy * MAX_TRANSLATION).clamp(WORKSPACE.0, WORKSPACE.1);
        self.gripper.heading += action.dtheta * MAX_ROTATION;

        self.follow_attachment();
        if matches!(self.attachment, Attachment::Drawer { .. } | Attachment::Contact { .. })
            && self.grip_distance() > HOLD_RADIUS
        {
            self.attachment = Attachment::Free;
        }

        let mut first = false;
        if self.attachment == Attachment::Free
            && (self.grip_closed || !needs_grasp)
            && self.grip_distance() <= CAPTURE_RADIUS
        {
            self.attachment = self.capture();
            if !self.subgoal_reached {
                self.subgoal_reached = true;
                first = true;
            }
        }
        self.project_out_of_wall();
        first
    }

    fn pivot_bearing(&self) -> f64 {
        let base = Vec2::new(crate::task::PIVOT_WALL_X, PIVOT_FLOOR);
        let d = self.gripper.position - base;
        d.y.atan2(d.x)
    }

    fn capture(&self) -> Attachment {
        match self.layout.goal {
            Goal::Place { .. } | Goal::Pour { .. } => Attachment::Rigid {
                offset: self.gripper.inverse().compose(&self.object),
            },
            Goal::Open { .. } => Attachment::Drawer {
                start: self.drawer_offset,
                grip_at_grasp: self.gripper.position,
            },
            Goal::Pivot => Attachment::Contact {
                start: self.pivot_angle,
                bearing_at_contact: self.pivot_bearing(),
            },
        }
    }

    fn follow_attachment(&mut self) {
        match self.attachment {
            Attachment::Free => {}
            Attachment::Rigid { offset } => self.object = self.gripper.compose(&offset),
            Attachment::Drawer { start, grip_at_grasp } => {
                let Goal::Open { axis } = self.layout.goal else { return };
                let moved = (self.gripper.position - grip_at_grasp).dot(axis);
                self.drawer_offset = (start + moved).clamp(0.0, DRAWER_TRAVEL);
                self.object = Pose {
                    position: self.layout.object.position + axis * self.drawer_offset,
                    heading: self.layout.object.heading,
                };
            }
            Attachment::Contact { start, bearing_at_contact } => {
                let turned = wrap_angle(bearing_at_contact - self.pivot_bearing());
                self.pivot_angle = (start + turned).clamp(0.0, PIVOT_MAX_ANGLE);
                self.object = pivot_pose(self.pivot_angle);
            }
        }
    }

    fn project_out_of_wall(&mut self) {
        let Some(wall) = self.layout.wall else { return };
        let max_x = self
            .object_outline()
            .iter()
            .map(|p| p.x)
            .fold(f64::NEG_INFINITY, f64::max);
        let excess = max_x - (wall.x() - WALL_GAP);
        if excess > 0.0 {
            self.object.position.x -= excess;
        }
    }
}
