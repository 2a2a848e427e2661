//! Synthetic ground truth and corrupted monocular priors.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{keyed_rng, Intrinsics, Pose};
use crate::maps::DepthMap;
use crate::volume::{ray_cast_depth_map, AnalyticScene};

/// Random stream reserved for monocular noise.
const NOISE_STREAM: u64 = 0x6d6f_6e6f;

/// Degradation applied to ground truth to obtain a monocular prior:
/// `mono = scale · blur(gt) + shift + noise`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Corruption {
    /// Gaussian blur standard deviation in pixels; 0 disables blurring.
    pub blur_sigma_px: f64,
    /// Standard deviation of additive Gaussian noise in meters.
    pub noise_sigma_m: f64,
    pub scale: f64,
    pub shift: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            blur_sigma_px: 0.0,
            noise_sigma_m: 0.0,
            scale: 1.0,
            shift: 0.0,
        }
    }
}

impl Corruption {
    /// Field name and message of the first violated bound.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        let non_negative = |v: f64| v >= 0.0 && v.is_finite();
        if !non_negative(self.blur_sigma_px) {
            return Err((
                "blur_sigma_px",
                format!("must be finite and >= 0, got {}", self.blur_sigma_px),
            ));
        }
        if !non_negative(self.noise_sigma_m) {
            return Err((
                "noise_sigma_m",
                format!("must be finite and >= 0, got {}", self.noise_sigma_m),
            ));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err((
                "scale",
                format!("must be finite and > 0, got {}", self.scale),
            ));
        }
        if !self.shift.is_finite() {
            return Err(("shift", format!("must be finite, got {}", self.shift)));
        }
        Ok(())
    }
}

/// Exact camera-z depth of the first surface hit through every pixel.
pub fn ground_truth(scene: &AnalyticScene, intr: &Intrinsics, pose: &Pose) -> DepthMap {
    ray_cast_depth_map(scene, intr, pose)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let r = radius as isize;
    (-r..=r)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect()
}

/// One separable pass; weights are renormalized over valid in-bounds taps.
fn blur_pass(map: &DepthMap, kernel: &[f64], horizontal: bool) -> DepthMap {
    let (w, h) = (map.width() as isize, map.height() as isize);
    let radius = (kernel.len() / 2) as isize;
    DepthMap::from_fn(map.width(), map.height(), |col, row| {
        let idx = map.index(col, row);
        if !map.is_valid_at(idx) {
            return None;
        }
        let (mut acc, mut norm) = (0.0, 0.0);
        for (k, &weight) in kernel.iter().enumerate() {
            let off = k as isize - radius;
            let (c, r) = if horizontal {
                (col as isize + off, row as isize)
            } else {
                (col as isize, row as isize + off)
            };
            if c < 0 || r < 0 || c >= w || r >= h {
                continue;
            }
            if let Some(v) = map.get(c as usize, r as usize) {
                acc += weight * v;
                norm += weight;
            }
        }
        Some(acc / norm)
    })
}

/// Mask-aware separable Gaussian blur; invalid pixels stay invalid.
pub fn gaussian_blur(map: &DepthMap, sigma_px: f64) -> DepthMap {
    if sigma_px <= 0.0 {
        return map.clone();
    }
    let kernel = gaussian_kernel(sigma_px);
    let horizontal = blur_pass(map, &kernel, true);
    blur_pass(&horizontal, &kernel, false)
}

/// Applies `corruption` to `gt`. Noise is drawn in row-major order from a
/// stream keyed by `seed`; pixels that end up non-positive become invalid.
pub fn corrupt(gt: &DepthMap, corruption: &Corruption, seed: u64) -> DepthMap {
    let mut out = gaussian_blur(gt, corruption.blur_sigma_px)
        .map_valid(|d| corruption.scale * d + corruption.shift);
    if corruption.noise_sigma_m > 0.0 {
        let normal =
            Normal::new(0.0, corruption.noise_sigma_m).expect("sigma is finite and positive");
        let mut rng = keyed_rng(seed, NOISE_STREAM);
        for idx in 0..out.len() {
            if let Some(d) = out.at(idx) {
                out.set_at(idx, d + normal.sample(&mut rng));
            }
        }
    }
    for idx in 0..out.len() {
        if out.at(idx).is_some_and(|d| d <= 0.0) {
            out.invalidate_at(idx);
        }
    }
    out
}
