//! Object-centric flow statistics and flow-derived rewards.
//!
//! A [`KeypointFlow`] holds tracked 2D keypoints on a manipulated object.
//! [`delta_flow`] condenses it into per-frame centroid, translation and
//! rotation statistics, and the [`reward`] module turns the mismatch between
//! an executed flow and a reference flow into a bounded dense reward.

pub mod error;
pub mod flow;
pub mod geometry;
pub mod noise;
pub mod pipeline;
pub mod reward;
pub mod rng;

pub use error::{Error, Result};
pub use flow::{align_flow_index, centroid, delta_flow, DeltaFlow, DeltaStep, KeypointFlow, MIN_VISIBLE};
pub use geometry::Vec2;
pub use noise::NoisePreset;
pub use reward::{RewardPhase, RewardScale, RewardVariant};

/// Width and height of the square image canvas, in pixels.
pub const CANVAS_SIZE: u32 = 480;
