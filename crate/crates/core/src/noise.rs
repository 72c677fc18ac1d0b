//! Composite trajectory noise: a Gaussian random walk plus a Brownian bridge
//! that drifts the endpoint. The noise is shared by every keypoint of a flow,
//! so it displaces the object as a whole and leaves its shape intact.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::flow::KeypointFlow;
use crate::geometry::Vec2;
use crate::rng;

/// Per-step walk standard deviation at scale 1, pixels.
pub const BASE_SIGMA: f64 = 0.5;
/// Endpoint drift standard deviation at scale 1, pixels.
pub const BASE_DRIFT: f64 = 10.0;

/// Multipliers applied to [`BASE_SIGMA`] and [`BASE_DRIFT`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePreset {
    pub gauss_scale: f64,
    pub drift_scale: f64,
}

impl NoisePreset {
    pub const NONE: NoisePreset = NoisePreset::new(0.0, 0.0);
    pub const SMALL_GAUSS: NoisePreset = NoisePreset::new(1.0, 0.0);
    pub const LARGE_GAUSS: NoisePreset = NoisePreset::new(4.0, 0.0);
    pub const SMALL_DRIFT: NoisePreset = NoisePreset::new(2.0, 1.0);
    pub const LARGE_DRIFT: NoisePreset = NoisePreset::new(2.0, 2.0);

    pub const NAMED: [(&'static str, NoisePreset); 5] = [
        ("none", Self::NONE),
        ("gauss1-drift0", Self::SMALL_GAUSS),
        ("gauss4-drift0", Self::LARGE_GAUSS),
        ("gauss2-drift1", Self::SMALL_DRIFT),
        ("gauss2-drift2", Self::LARGE_DRIFT),
    ];

    pub const fn new(gauss_scale: f64, drift_scale: f64) -> Self {
        Self {
            gauss_scale,
            drift_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gauss_scale >= 0.0 && self.drift_scale >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "noise scales must be non-negative, got {self:?}"
            )))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.gauss_scale == 0.0 && self.drift_scale == 0.0
    }
}

impl Default for NoisePreset {
    fn default() -> Self {
        Self::NONE
    }
}

impl FromStr for NoisePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::NAMED
            .iter()
            .find(|(name, _)| *name == s)
            .map(|&(_, p)| p)
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

impl fmt::Display for NoisePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match Self::NAMED.iter().find(|(_, p)| p == self) {
            Some((name, _)) => f.write_str(name),
            None => write!(f, "gauss{}-drift{}", self.gauss_scale, self.drift_scale),
        }
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma is finite and non-negative")
}

fn walk_with<R: Rng>(len: usize, sigma: f64, rng: &mut R) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    let step = normal(sigma);
    let mut pos = Vec2::ZERO;
    out.push(pos);
    for _ in 1..len {
        pos += Vec2::new(step.sample(rng), step.sample(rng));
        out.push(pos);
    }
    out
}

/// Gaussian random walk anchored at the origin.
pub fn random_walk(len: usize, sigma: f64, seed: u64) -> Result<Vec<Vec2>> {
    if len < 1 || !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "random walk needs len >= 1 and sigma >= 0, got len={len}, sigma={sigma}"
        )));
    }
    Ok(walk_with(len, sigma, &mut rng::stream(seed, "noise/walk", 0)))
}

/// Brownian bridge from the origin to `endpoint`.
pub fn brownian_bridge(len: usize, endpoint: Vec2, sigma: f64, seed: u64) -> Result<Vec<Vec2>> {
    if len < 2 || !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "brownian bridge needs len >= 2 and sigma >= 0, got len={len}, sigma={sigma}"
        )));
    }
    let walk = walk_with(len, sigma, &mut rng::stream(seed, "noise/bridge", 0));
    let last = walk[len - 1];
    let denom = (len - 1) as f64;
    let mut out: Vec<Vec2> = walk
        .iter()
        .enumerate()
        .map(|(t, &w)| {
            let s = t as f64 / denom;
            w - last * s + endpoint * s
        })
        .collect();
    out[0] = Vec2::ZERO;
    out[len - 1] = endpoint;
    Ok(out)
}

/// The shared per-frame offset sequence [`perturb_flow`] adds.
///
/// The walk uses `gauss_scale * base_sigma`; the bridge endpoint is drawn
/// with per-axis deviation `drift_scale * base_drift`, and the bridge's own
/// wiggle uses `drift_scale * base_sigma`.
pub fn object_offsets(
    len: usize,
    preset: NoisePreset,
    base_sigma: f64,
    base_drift: f64,
    seed: u64,
) -> Result<Vec<Vec2>> {
    preset.validate()?;
    if !(base_sigma >= 0.0 && base_drift >= 0.0) {
        return Err(Error::InvalidParameter("base noise magnitudes must be non-negative".into()));
    }
    let mut offsets = vec![Vec2::ZERO; len];
    if preset.gauss_scale > 0.0 {
        let walk = random_walk(len, preset.gauss_scale * base_sigma, rng::derive_seed(seed, "noise/perturb-walk", 0))?;
        offsets.iter_mut().zip(walk).for_each(|(o, w)| *o += w);
    }
    if preset.drift_scale > 0.0 && len >= 2 {
        let mut endpoint_rng = rng::stream(seed, "noise/endpoint", 0);
        let drift = normal(preset.drift_scale * base_drift);
        let endpoint = Vec2::new(drift.sample(&mut endpoint_rng), drift.sample(&mut endpoint_rng));
        let bridge = brownian_bridge(
            len,
            endpoint,
            preset.drift_scale * base_sigma,
            rng::derive_seed(seed, "noise/perturb-bridge", 0),
        )?;
        offsets.iter_mut().zip(bridge).for_each(|(o, b)| *o += b);
    }
    Ok(offsets)
}

/// Adds object-level noise to every keypoint trajectory of `flow`.
pub fn perturb_flow(
    flow: &KeypointFlow,
    preset: NoisePreset,
    base_sigma: f64,
    base_drift: f64,
    seed: u64,
) -> Result<KeypointFlow> {
    if preset.is_zero() {
        preset.validate()?;
        return Ok(flow.clone());
    }
    let offsets = object_offsets(flow.frames(), preset, base_sigma, base_drift, seed)?;
    flow.offset_frames(&offsets)
}
