//! Flat policy observation.

use deltaflow_core::{DeltaStep, Vec2};
use serde::{Deserialize, Serialize};

use crate::world::World;
use crate::PIXELS_PER_UNIT;

/// Pixel scale for centroid positions (half the canvas).
const CENTROID_SCALE: f64 = PIXELS_PER_UNIT / 2.0;
/// Pixel scale for flow translations.
const TRANSLATION_SCALE: f64 = 96.0;
/// Pixel² scale for flow rotations.
const ROTATION_SCALE: f64 = 1000.0;
/// Gain on the gripper-to-object offset, world units.
const OFFSET_GAIN: f64 = 4.0;
/// Pixel scale for reference-minus-observed translation.
const ERROR_SCALE: f64 = 48.0;

/// Robot state, observed and reference flow statistics, and the object's
/// initial position, flattened into a normalized vector with a few
/// difference features appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Gripper x, y, heading cos/sin, grip, attached flag, episode progress.
    pub robot: [f64; 7],
    /// Observed keypoint centroid, pixels.
    pub centroid: Vec2,
    /// Observed delta-flow step.
    pub delta: [f64; 3],
    /// Reference centroids over the next `k` aligned frames, pixels.
    pub lookahead_centroids: Vec<Vec2>,
    /// Reference delta-flow over the next `k` aligned frames.
    pub lookahead_deltas: Vec<[f64; 3]>,
    /// Initial object centroid lifted to 3D (height 0), world units.
    pub initial_centroid_3d: [f64; 3],
}

impl Observation {
    pub fn dim(lookahead: usize) -> usize {
        7 + 2 + 3 + 5 * lookahead + 3 + 2 + 3 * lookahead
    }

    pub(crate) fn robot_state(world: &World, progress: f64) -> [f64; 7] {
        let g = world.gripper();
        [
            g.position.x,
            g.position.y,
            g.heading.cos(),
            g.heading.sin(),
            if world.grip_closed() { 1.0 } else { -1.0 },
            if world.attached() { 1.0 } else { 0.0 },
            progress,
        ]
    }

    pub(crate) fn delta_array(step: &DeltaStep) -> [f64; 3] {
        [step.translation.x, step.translation.y, step.rotation]
    }

    /// Normalized feature vector fed to the networks.
    pub fn to_features(&self) -> Vec<f32> {
        let mut v = Vec::with_capacity(Self::dim(self.lookahead_centroids.len()));
        let centred = |x: f64| (x - 0.5) * 2.0;
        v.extend([
            centred(self.robot[0]),
            centred(self.robot[1]),
            self.robot[2],
            self.robot[3],
            self.robot[4],
            self.robot[5],
            self.robot[6],
        ]);
        let push_centroid = |v: &mut Vec<f64>, c: &Vec2| {
            v.push((c.x - CENTROID_SCALE) / CENTROID_SCALE);
            v.push((c.y - CENTROID_SCALE) / CENTROID_SCALE);
        };
        let push_delta = |v: &mut Vec<f64>, d: &[f64; 3]| {
            v.push(d[0] / TRANSLATION_SCALE);
            v.push(d[1] / TRANSLATION_SCALE);
            v.push(d[2] / ROTATION_SCALE);
        };
        push_centroid(&mut v, &self.centroid);
        push_delta(&mut v, &self.delta);
        for c in &self.lookahead_centroids {
            push_centroid(&mut v, c);
        }
        for d in &self.lookahead_deltas {
            push_delta(&mut v, d);
        }
        v.extend([
            centred(self.initial_centroid_3d[0]),
            centred(self.initial_centroid_3d[1]),
            self.initial_centroid_3d[2],
        ]);
        // Differences the policy would otherwise have to learn to subtract.
        v.push((self.robot[0] - self.centroid.x / PIXELS_PER_UNIT) * OFFSET_GAIN);
        v.push((self.robot[1] - self.centroid.y / PIXELS_PER_UNIT) * OFFSET_GAIN);
        for d in &self.lookahead_deltas {
            v.push((d[0] - self.delta[0]) / ERROR_SCALE);
            v.push((d[1] - self.delta[1]) / ERROR_SCALE);
            v.push((d[2] - self.delta[2]) / ROTATION_SCALE);
        }
        v.into_iter().map(|x| x as f32).collect()
    }
}
