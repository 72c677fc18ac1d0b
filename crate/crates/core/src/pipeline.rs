//! Flow file I/O and keypoint selection: motion filtering, region-area
//! filtering over precomputed label masks, and seeded subsampling.
//!
//! # Flow file
//!
//! ```json
//! {
//!   "version": 1,
//!   "canvas": [480, 480],
//!   "task": "pick-place",
//!   "positions": [[[x, y], ...], ...],
//!   "visibility": [[true, ...], ...],
//!   "masks": "masks.json"
//! }
//! ```
//!
//! `positions` is frame-major (`T` rows of `N` points). Coordinates may be
//! written as numbers, or as the strings `"NaN"`, `"Infinity"` and
//! `"-Infinity"`; non-finite values are rejected on load. `masks` is optional.
//!
//! # Mask set
//!
//! A JSON index naming a binary PGM label raster plus an area table:
//!
//! ```json
//! { "version": 1, "canvas": [480, 480], "raster": "labels.pgm",
//!   "regions": [ { "label": 1, "area": 400 }, { "label": 2, "area": 20000 } ] }
//! ```
//!
//! Pixel value 0 is unlabelled; any other value is a region label whose area
//! must match both the table and the raster pixel count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::flow::KeypointFlow;
use crate::geometry::Vec2;
use crate::rng;
use crate::CANVAS_SIZE;

pub const FLOW_FILE_VERSION: u32 = 1;
pub const MASK_FILE_VERSION: u32 = 1;

/// Default motion-filter threshold, pixels.
pub const DEFAULT_MOTION_THRESHOLD: f64 = 50.0;
/// Default region-area threshold, pixels².
pub const DEFAULT_AREA_THRESHOLD: u64 = 10_000;
/// Default number of keypoints kept by [`subsample`].
pub const DEFAULT_KEYPOINTS: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowFile {
    pub version: u32,
    pub canvas: [u32; 2],
    pub task: String,
    #[serde(deserialize_with = "de_positions")]
    pub positions: Vec<Vec<[f64; 2]>>,
    pub visibility: Vec<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Coord {
    Num(f64),
    Text(String),
    Null(()),
}

impl Coord {
    fn value(self) -> std::result::Result<f64, String> {
        match self {
            Coord::Num(v) => Ok(v),
            Coord::Null(()) => Ok(f64::NAN),
            Coord::Text(s) => match s.as_str() {
                "NaN" | "nan" => Ok(f64::NAN),
                "Infinity" | "inf" => Ok(f64::INFINITY),
                "-Infinity" | "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(format!("invalid coordinate `{other}`")),
            },
        }
    }
}

fn de_positions<'de, D>(deserializer: D) -> std::result::Result<Vec<Vec<[f64; 2]>>, D::Error>
where
    D: Deserializer<'de>,
{
    let raw: Vec<Vec<[Coord; 2]>> = Vec::deserialize(deserializer)?;
    raw.into_iter()
        .map(|row| {
            row.into_iter()
                .map(|[x, y]| Ok([x.value()?, y.value()?]))
                .collect::<std::result::Result<Vec<_>, String>>()
        })
        .collect::<std::result::Result<Vec<_>, String>>()
        .map_err(serde::de::Error::custom)
}

impl FlowFile {
    pub fn from_flow(task: impl Into<String>, flow: &KeypointFlow) -> Self {
        let positions = (0..flow.frames())
            .map(|t| flow.frame(t).iter().map(|&p| p.into()).collect())
            .collect();
        let visibility = (0..flow.frames())
            .map(|t| flow.frame_visibility(t).to_vec())
            .collect();
        Self {
            version: FLOW_FILE_VERSION,
            canvas: [CANVAS_SIZE, CANVAS_SIZE],
            task: task.into(),
            positions,
            visibility,
            masks: None,
        }
    }

    /// Checks the schema and builds the validated flow.
    pub fn to_flow(&self) -> Result<KeypointFlow> {
        if self.version != FLOW_FILE_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "unsupported flow file version {} (expected {FLOW_FILE_VERSION})",
                self.version
            )));
        }
        if self.canvas[0] == 0 || self.canvas[1] == 0 {
            return Err(Error::SchemaMismatch("canvas size must be positive".into()));
        }
        if self.positions.len() != self.visibility.len() {
            return Err(Error::SchemaMismatch(format!(
                "{} position frames but {} visibility frames",
                self.positions.len(),
                self.visibility.len()
            )));
        }
        let n = self.positions.first().map_or(0, Vec::len);
        for (t, (p, v)) in self.positions.iter().zip(&self.visibility).enumerate() {
            if p.len() != n || v.len() != n {
                return Err(Error::SchemaMismatch(format!(
                    "frame {t} has {} positions and {} visibility flags, expected {n}",
                    p.len(),
                    v.len()
                )));
            }
        }
        let positions = self
            .positions
            .iter()
            .map(|row| row.iter().map(|&p| Vec2::from(p)).collect())
            .collect();
        KeypointFlow::from_frames(positions, self.visibility.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(path, text)?;
        Ok(())
    }
}

/// Loads and validates a flow file.
pub fn load_flow(path: impl AsRef<Path>) -> Result<KeypointFlow> {
    FlowFile::load(path)?.to_flow()
}

pub fn save_flow(path: impl AsRef<Path>, task: &str, flow: &KeypointFlow) -> Result<()> {
    FlowFile::from_flow(task, flow).save(path)
}

/// Keeps keypoints whose largest displacement from their first-frame
/// position, over the frames where they are visible, exceeds `threshold_px`.
pub fn motion_filter(flow: &KeypointFlow, threshold_px: f64) -> Result<KeypointFlow> {
    if !(threshold_px >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "motion threshold must be non-negative, got {threshold_px}"
        )));
    }
    let keep: Vec<usize> = (0..flow.keypoints())
        .filter(|&i| max_displacement(flow, i) > threshold_px)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult);
    }
    flow.select_keypoints(&keep)
}

/// Largest distance of keypoint `i` from its first-frame position.
pub fn max_displacement(flow: &KeypointFlow, i: usize) -> f64 {
    let start = flow.position(0, i);
    (1..flow.frames())
        .filter(|&t| flow.is_visible(t, i))
        .map(|t| flow.position(t, i).distance(start))
        .fold(0.0, f64::max)
}

/// A label raster with per-region pixel areas.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    width: u32,
    height: u32,
    labels: Vec<u16>,
    areas: BTreeMap<u16, u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MaskIndex {
    version: u32,
    canvas: [u32; 2],
    raster: String,
    regions: Vec<RegionEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegionEntry {
    label: u16,
    area: u64,
}

impl MaskSet {
    /// Builds a mask set from a row-major label raster; areas are counted.
    pub fn from_labels(width: u32, height: u32, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != (width as usize) * (height as usize) {
            return Err(Error::InvariantViolation(format!(
                "label raster has {} pixels, expected {width}x{height}",
                labels.len()
            )));
        }
        let mut areas = BTreeMap::new();
        for &l in labels.iter().filter(|&&l| l != 0) {
            *areas.entry(l).or_insert(0u64) += 1;
        }
        Ok(Self {
            width,
            height,
            labels,
            areas,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn areas(&self) -> &BTreeMap<u16, u64> {
        &self.areas
    }

    pub fn label_at(&self, p: Vec2) -> u16 {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return 0;
        }
        let (x, y) = (p.x.floor() as u64, p.y.floor() as u64);
        if x >= self.width as u64 || y >= self.height as u64 {
            return 0;
        }
        self.labels[(y * self.width as u64 + x) as usize]
    }

    /// Area of the region containing `p`, if it lies in a labelled region.
    pub fn region_area_at(&self, p: Vec2) -> Option<u64> {
        match self.label_at(p) {
            0 => None,
            l => self.areas.get(&l).copied(),
        }
    }

    /// Reads a mask index file and the raster it names (relative paths are
    /// resolved against the index file's directory).
    pub fn load(index_path: impl AsRef<Path>) -> Result<Self> {
        let index_path = index_path.as_ref();
        let text = fs::read_to_string(index_path)?;
        let index: MaskIndex = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", index_path.display())))?;
        if index.version != MASK_FILE_VERSION {
            return Err(Error::SchemaMismatch(format!(
                "unsupported mask file version {}",
                index.version
            )));
        }
        let raster_path = resolve(index_path, &index.raster);
        let img = image::open(&raster_path)
            .map_err(|e| Error::Parse(format!("{}: {e}", raster_path.display())))?;
        let (w, h) = (img.width(), img.height());
        // label values are taken verbatim, not rescaled between bit depths
        let labels: Vec<u16> = match img {
            image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
            image::DynamicImage::ImageLuma16(buf) => buf.into_raw(),
            _ => {
                return Err(Error::SchemaMismatch(format!(
                    "{} is not a single-channel graymap",
                    raster_path.display()
                )))
            }
        };
        if [w, h] != index.canvas {
            return Err(Error::SchemaMismatch(format!(
                "raster is {w}x{h} but index declares {}x{}",
                index.canvas[0], index.canvas[1]
            )));
        }
        let set = Self::from_labels(w, h, labels)?;
        let declared: BTreeMap<u16, u64> =
            index.regions.iter().map(|r| (r.label, r.area)).collect();
        if declared != set.areas {
            return Err(Error::SchemaMismatch(
                "area table does not match the raster".into(),
            ));
        }
        Ok(set)
    }

    /// Writes `<stem>.json` and `<stem>.pgm` into `dir`, returning the index path.
    pub fn save(&self, dir: impl AsRef<Path>, stem: &str) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let raster_name = format!("{stem}.pgm");
        let max_label = self.labels.iter().copied().max().unwrap_or(0);
        if max_label <= u8::MAX as u16 {
            let raw: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
            let img = image::GrayImage::from_raw(self.width, self.height, raw)
                .expect("raster size checked at construction");
            img.save_with_format(dir.join(&raster_name), image::ImageFormat::Pnm)
        } else {
            let img =
                image::ImageBuffer::<image::Luma<u16>, _>::from_raw(self.width, self.height, self.labels.clone())
                    .expect("raster size checked at construction");
            img.save_with_format(dir.join(&raster_name), image::ImageFormat::Pnm)
        }
        .map_err(|e| Error::Parse(e.to_string()))?;
        let index = MaskIndex {
            version: MASK_FILE_VERSION,
            canvas: [self.width, self.height],
            raster: raster_name,
            regions: self
                .areas
                .iter()
                .map(|(&label, &area)| RegionEntry { label, area })
                .collect(),
        };
        let index_path = dir.join(format!("{stem}.json"));
        let text = serde_json::to_string_pretty(&index).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&index_path, text)?;
        Ok(index_path)
    }
}

fn resolve(base_file: &Path, name: &str) -> PathBuf {
    let p = Path::new(name);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_file.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Drops keypoints whose first-frame position falls in a region larger than
/// `area_threshold` pixels². Unlabelled keypoints are kept.
pub fn mask_filter(flow: &KeypointFlow, masks: &MaskSet, area_threshold: u64) -> Result<KeypointFlow> {
    let keep: Vec<usize> = (0..flow.keypoints())
        .filter(|&i| {
            masks
                .region_area_at(flow.position(0, i))
                .is_none_or(|area| area <= area_threshold)
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult);
    }
    flow.select_keypoints(&keep)
}

/// Indices of `min(n, total)` keypoints drawn uniformly without replacement,
/// in ascending order.
pub fn subsample_indices(total: usize, n: usize, seed: u64) -> Vec<usize> {
    if n >= total {
        return (0..total).collect();
    }
    let mut rng = rng::stream(seed, "pipeline/subsample", 0);
    let mut picked = index::sample(&mut rng, total, n).into_vec();
    picked.sort_unstable();
    picked
}

/// Seeded farthest-point selection of `min(n, total)` keypoints, in ascending
/// order. Distances use each keypoint's first visible position; ties go to
/// the lowest index.
pub fn spread_indices(flow: &KeypointFlow, n: usize, seed: u64) -> Vec<usize> {
    let total = flow.keypoints();
    if n >= total {
        return (0..total).collect();
    }
    let anchors: Vec<Vec2> = (0..total)
        .map(|i| {
            (0..flow.frames())
                .find(|&t| flow.is_visible(t, i))
                .map_or(flow.position(0, i), |t| flow.position(t, i))
        })
        .collect();
    let mut rng = rng::stream(seed, "pipeline/subsample", 0);
    let first = rng.random_range(0..total);
    let mut picked = vec![first];
    let mut nearest: Vec<f64> = anchors.iter().map(|p| p.distance(anchors[first])).collect();
    while picked.len() < n {
        let mut best = 0;
        for i in 1..total {
            if nearest[i] > nearest[best] {
                best = i;
            }
        }
        picked.push(best);
        for (d, p) in nearest.iter_mut().zip(&anchors) {
            *d = d.min(p.distance(anchors[best]));
        }
    }
    picked.sort_unstable();
    picked
}

/// Seeded spatially spread subsample of keypoints, keeping their original
/// order.
pub fn subsample(flow: &KeypointFlow, n: usize, seed: u64) -> Result<KeypointFlow> {
    if n == 0 {
        return Err(Error::InvalidParameter("subsample size must be at least 1".into()));
    }
    flow.select_keypoints(&spread_indices(flow, n, seed))
}
