//! Keypoint flows and their condensed delta-flow statistics.

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Minimum number of visible keypoints a frame needs before its rotation
/// statistic is computed.
pub const MIN_VISIBLE: usize = 4;

/// Tracked 2D keypoints over time, in canvas pixels.
///
/// Positions are stored frame-major: keypoint `i` of frame `t` lives at
/// index `t * keypoints + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFlow {
    frames: usize,
    keypoints: usize,
    positions: Vec<Vec2>,
    visibility: Vec<bool>,
}

impl KeypointFlow {
    pub fn new(
        frames: usize,
        keypoints: usize,
        positions: Vec<Vec2>,
        visibility: Vec<bool>,
    ) -> Result<Self> {
        if frames < 2 {
            return Err(Error::InvariantViolation(format!(
                "a flow needs at least 2 frames, got {frames}"
            )));
        }
        if keypoints < 1 {
            return Err(Error::InvariantViolation(
                "a flow needs at least 1 keypoint".into(),
            ));
        }
        let expected = frames * keypoints;
        if positions.len() != expected || visibility.len() != expected {
            return Err(Error::InvariantViolation(format!(
                "expected {expected} entries for {frames}x{keypoints}, got {} positions and {} visibility flags",
                positions.len(),
                visibility.len()
            )));
        }
        if let Some(idx) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvariantViolation(format!(
                "non-finite position at frame {}, keypoint {}",
                idx / keypoints,
                idx % keypoints
            )));
        }
        Ok(Self {
            frames,
            keypoints,
            positions,
            visibility,
        })
    }

    /// Builds a flow from per-frame rows.
    pub fn from_frames(positions: Vec<Vec<Vec2>>, visibility: Vec<Vec<bool>>) -> Result<Self> {
        let frames = positions.len();
        let keypoints = positions.first().map_or(0, Vec::len);
        if visibility.len() != frames
            || positions.iter().any(|row| row.len() != keypoints)
            || visibility.iter().any(|row| row.len() != keypoints)
        {
            return Err(Error::InvariantViolation(
                "ragged position or visibility rows".into(),
            ));
        }
        Self::new(
            frames,
            keypoints,
            positions.into_iter().flatten().collect(),
            visibility.into_iter().flatten().collect(),
        )
    }

    /// A flow in which every keypoint is visible in every frame.
    pub fn fully_visible(positions: Vec<Vec<Vec2>>) -> Result<Self> {
        let visibility = positions.iter().map(|row| vec![true; row.len()]).collect();
        Self::from_frames(positions, visibility)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn keypoints(&self) -> usize {
        self.keypoints
    }

    pub fn frame(&self, t: usize) -> &[Vec2] {
        &self.positions[t * self.keypoints..(t + 1) * self.keypoints]
    }

    pub fn frame_visibility(&self, t: usize) -> &[bool] {
        &self.visibility[t * self.keypoints..(t + 1) * self.keypoints]
    }

    pub fn position(&self, t: usize, i: usize) -> Vec2 {
        self.positions[t * self.keypoints + i]
    }

    pub fn is_visible(&self, t: usize, i: usize) -> bool {
        self.visibility[t * self.keypoints + i]
    }

    /// Keeps the listed keypoints, in the given order.
    pub fn select_keypoints(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.keypoints) {
            return Err(Error::InvalidParameter(format!(
                "keypoint index {bad} out of range for {} keypoints",
                self.keypoints
            )));
        }
        let mut positions = Vec::with_capacity(self.frames * indices.len());
        let mut visibility = Vec::with_capacity(self.frames * indices.len());
        for t in 0..self.frames {
            for &i in indices {
                positions.push(self.position(t, i));
                visibility.push(self.is_visible(t, i));
            }
        }
        Self::new(self.frames, indices.len(), positions, visibility)
    }

    /// Adds `offsets[t]` to every keypoint of frame `t`.
    pub fn offset_frames(&self, offsets: &[Vec2]) -> Result<Self> {
        if offsets.len() != self.frames {
            return Err(Error::InvalidLength(format!(
                "{} offsets for {} frames",
                offsets.len(),
                self.frames
            )));
        }
        let positions = self
            .positions
            .iter()
            .enumerate()
            .map(|(idx, &p)| p + offsets[idx / self.keypoints])
            .collect();
        Self::new(self.frames, self.keypoints, positions, self.visibility.clone())
    }

    pub fn translate(&self, offset: Vec2) -> Result<Self> {
        self.offset_frames(&vec![offset; self.frames])
    }
}

/// Mean of the visible points.
///
/// Fails with [`Error::TooFewVisible`] when fewer than `min_visible` points are
/// visible (at least one is always required).
pub fn centroid(positions: &[Vec2], visibility: &[bool], min_visible: usize) -> Result<Vec2> {
    let mut sum = Vec2::ZERO;
    let mut count = 0usize;
    for (&p, _) in positions.iter().zip(visibility).filter(|(_, &v)| v) {
        sum += p;
        count += 1;
    }
    if count < min_visible.max(1) {
        return Err(Error::TooFewVisible {
            frame: 0,
            visible: count,
            required: min_visible.max(1),
        });
    }
    Ok(sum / count as f64)
}

/// The motion of one frame relative to the first: `(δ_tr; δ_rot)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DeltaStep {
    /// Centroid displacement from the first frame, pixels.
    pub translation: Vec2,
    /// Mean signed cross product of centred keypoints, pixels².
    pub rotation: f64,
}

/// Per-frame centroids, translations and rotation statistics of a flow.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaFlow {
    pub centroids: Vec<Vec2>,
    pub translations: Vec<Vec2>,
    pub rotations: Vec<f64>,
}

impl DeltaFlow {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn step(&self, t: usize) -> DeltaStep {
        DeltaStep {
            translation: self.translations[t],
            rotation: self.rotations[t],
        }
    }
}

/// Delta statistics of `current` against `first`.
///
/// Only keypoints visible in both frames take part, and both centroids are
/// taken over that common set. Returns the current-frame centroid alongside
/// the step.
pub fn delta_step(
    first: &[Vec2],
    first_visibility: &[bool],
    current: &[Vec2],
    current_visibility: &[bool],
) -> Result<(Vec2, DeltaStep)> {
    debug_assert_eq!(first.len(), current.len());
    let mut first_sum = Vec2::ZERO;
    let mut current_sum = Vec2::ZERO;
    let mut count = 0usize;
    for i in 0..first.len() {
        if first_visibility[i] && current_visibility[i] {
            first_sum += first[i];
            current_sum += current[i];
            count += 1;
        }
    }
    if count < MIN_VISIBLE {
        return Err(Error::TooFewVisible {
            frame: 0,
            visible: count,
            required: MIN_VISIBLE,
        });
    }
    let n = count as f64;
    let first_centroid = first_sum / n;
    let current_centroid = current_sum / n;
    let mut cross_sum = 0.0;
    for i in 0..first.len() {
        if first_visibility[i] && current_visibility[i] {
            cross_sum += (current[i] - current_centroid).cross(first[i] - first_centroid);
        }
    }
    Ok((
        current_centroid,
        DeltaStep {
            translation: current_centroid - first_centroid,
            rotation: cross_sum / n,
        },
    ))
}

/// Condenses a keypoint flow into its delta-flow.
pub fn delta_flow(flow: &KeypointFlow) -> Result<DeltaFlow> {
    let frames = flow.frames();
    let mut centroids = Vec::with_capacity(frames);
    let mut translations = Vec::with_capacity(frames);
    let mut rotations = Vec::with_capacity(frames);
    let first = flow.frame(0);
    let first_visibility = flow.frame_visibility(0);
    for t in 0..frames {
        let (centroid, step) = if t == 0 {
            let c = centroid(first, first_visibility, MIN_VISIBLE)?;
            (c, DeltaStep::default())
        } else {
            delta_step(first, first_visibility, flow.frame(t), flow.frame_visibility(t))
                .map_err(|e| with_frame(e, t))?
        };
        centroids.push(centroid);
        translations.push(step.translation);
        rotations.push(step.rotation);
    }
    Ok(DeltaFlow {
        centroids,
        translations,
        rotations,
    })
}

fn with_frame(err: Error, frame: usize) -> Error {
    match err {
        Error::TooFewVisible {
            visible, required, ..
        } => Error::TooFewVisible {
            frame,
            visible,
            required,
        },
        other => other,
    }
}

/// Maps an episode step onto a reference-flow frame by linear index
/// interpolation. Steps past the end clamp to the last frame.
pub fn align_flow_index(episode_step: usize, episode_len: usize, flow_len: usize) -> Result<usize> {
    if episode_len < 2 {
        return Err(Error::InvalidLength(format!(
            "episode length must be at least 2, got {episode_len}"
        )));
    }
    if flow_len < 2 {
        return Err(Error::InvalidLength(format!(
            "flow length must be at least 2, got {flow_len}"
        )));
    }
    let scaled = episode_step as f64 * (flow_len - 1) as f64 / (episode_len - 1) as f64;
    Ok((scaled.round() as usize).min(flow_len - 1))
}
