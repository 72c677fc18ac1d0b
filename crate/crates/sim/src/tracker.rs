//! Oracle keypoint tracker.
//!
//! Projects the object's body-frame keypoints through its pose into canvas
//! pixels. Keypoints whose line of sight to the camera crosses the wall are
//! flagged invisible but still reported, like an occlusion-robust tracker.

use deltaflow_core::Vec2;

use crate::geometry::segment_crossing;
use crate::task::Wall;
use crate::world::World;
use crate::PIXELS_PER_UNIT;

pub fn to_pixels(p: Vec2) -> Vec2 {
    p * PIXELS_PER_UNIT
}

/// Whether the wall blocks the camera's view of world point `p`.
pub fn occluded(wall: &Wall, p: Vec2) -> bool {
    // a crossing at the keypoint itself (t = 1) is a touch, not an occlusion
    segment_crossing(wall.camera, p, wall.bottom, wall.top).is_some_and(|t| t < 1.0 - 1e-9)
}

/// Pixel positions and visibility of every template keypoint.
pub fn oracle_track(world: &World) -> (Vec<Vec2>, Vec<bool>) {
    let points = world.object_keypoints();
    let visibility = match world.wall() {
        Some(wall) => points.iter().map(|&p| !occluded(wall, p)).collect(),
        None => vec![true; points.len()],
    };
    (points.into_iter().map(to_pixels).collect(), visibility)
}

/// Like [`oracle_track`], restricted to the listed template keypoints.
pub fn oracle_track_subset(world: &World, indices: &[usize]) -> (Vec<Vec2>, Vec<bool>) {
    let pose = world.object();
    let template = &world.layout().keypoints;
    let mut positions = Vec::with_capacity(indices.len());
    let mut visibility = Vec::with_capacity(indices.len());
    for &i in indices {
        let p = pose.apply(template[i]);
        visibility.push(world.wall().is_none_or(|w| !occluded(w, p)));
        positions.push(to_pixels(p));
    }
    (positions, visibility)
}
