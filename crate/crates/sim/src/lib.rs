//! A deterministic planar manipulation simulator.
//!
//! Four desk-scale tasks (pick-place, pour, open, pivot) run on a kinematic
//! gripper in the unit square, viewed through a 480×480 canvas. Object
//! keypoints are tracked by an oracle that knows the object pose, scripted
//! experts produce reference flows, and [`Env`] pays the hybrid flow-derived
//! reward on every step.

pub mod env;
pub mod error;
pub mod expert;
pub mod geometry;
pub mod observation;
pub mod record;
pub mod task;
pub mod tracker;
pub mod world;

pub use env::{Env, EnvConfig, Policy, Reference, StepOutcome};
pub use error::{Result, SimError};
pub use expert::{scripted_expert, ExpertDemo, ScriptedExpert};
pub use geometry::Pose;
pub use observation::Observation;
pub use task::TaskKind;
pub use world::{Action, World};

/// Pixels per world unit (the canvas spans the unit square).
pub const PIXELS_PER_UNIT: f64 = deltaflow_core::CANVAS_SIZE as f64;
/// Integration substeps per policy action.
pub const ACTION_REPEAT: usize = 3;
/// Default episode length, in policy steps.
pub const MAX_EPISODE_STEPS: usize = 50;
/// Default lookahead window over the reference flow.
pub const LOOKAHEAD: usize = 8;
