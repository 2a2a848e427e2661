//! Volume rendering of depth and depth uncertainty.
//!
//! Along a ray the sampled densities define per-segment opacities
//! `αᵢ = 1 − exp(−σᵢΔᵢ)` and transmittances `Tᵢ = Π_{j<i}(1 − αⱼ)`. The
//! weights `wᵢ = Tᵢαᵢ`, normalized to `pᵢ`, form the distribution of where the
//! ray terminates; its mean is the rendered depth and its variance the
//! per-ray depth uncertainty.

mod scene;

pub use scene::{AnalyticScene, DensityField, Primitive, Shape};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::VolumeError;
use crate::geometry::{keyed_rng, pixel_to_ray, Intrinsics, Pixel, Pose, Ray};
use crate::maps::{DepthMap, VarianceMap};
use crate::VARIANCE_FLOOR;

/// Total termination weight below which a ray counts as non-terminating.
pub const WEIGHT_FLOOR: f64 = 1e-3;

/// Stratified sampling parameters along a ray.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    #[serde(default)]
    pub jitter: bool,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            near: 0.1,
            far: 10.0,
            samples: 64,
            jitter: false,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), VolumeError> {
        if !(self.near > 0.0 && self.far > self.near && self.far.is_finite() && self.samples >= 2) {
            return Err(VolumeError::InvalidBounds {
                near: self.near,
                far: self.far,
                samples: self.samples,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn bin_width(&self) -> f64 {
        (self.far - self.near) / self.samples as f64
    }
}

/// Key of the jitter random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngKey {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub t: Vec<f64>,
    pub delta: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl RaySamples {
    /// Checks lengths, ordering and signs.
    pub fn is_well_formed(&self) -> bool {
        let n = self.t.len();
        n == self.delta.len()
            && n == self.sigma.len()
            && self.t.windows(2).all(|w| w[0] < w[1])
            && self.delta.iter().all(|&d| d > 0.0)
            && self.sigma.iter().all(|&s| s >= 0.0)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Sample distances in `[near, far]`: one per equal-width bin, at the bin
/// midpoint or uniformly jittered inside it.
pub fn sample_distances(params: &SamplingParams, key: Option<RngKey>) -> Vec<f64> {
    let bin = params.bin_width();
    match key.filter(|_| params.jitter) {
        Some(key) => {
            let mut rng = keyed_rng(key.seed, key.stream);
            (0..params.samples)
                .map(|i| params.near + (i as f64 + rng.random::<f64>()) * bin)
                .collect()
        }
        None => (0..params.samples)
            .map(|i| params.near + (i as f64 + 0.5) * bin)
            .collect(),
    }
}

/// Samples the density field along a ray.
///
/// `Δᵢ = tᵢ₊₁ − tᵢ`, and the last interval is the uniform bin width.
pub fn sample_ray<F: DensityField + ?Sized>(
    field: &F,
    ray: &Ray,
    params: &SamplingParams,
    key: Option<RngKey>,
) -> Result<RaySamples, VolumeError> {
    params.validate()?;
    let t = sample_distances(params, key);
    let bin = params.bin_width();
    let delta = t
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain(std::iter::once(bin))
        .collect();
    let sigma = t.iter().map(|&ti| field.density(&ray.at(ti))).collect();
    Ok(RaySamples { t, delta, sigma })
}

/// Termination weights of one ray.
#[derive(Clone, Debug, PartialEq)]
pub struct TerminationStats {
    pub weights: Vec<f64>,
    pub total_weight: f64,
    /// Normalized weights; `None` for a non-terminating ray.
    pub p: Option<Vec<f64>>,
}

impl TerminationStats {
    pub fn terminates(&self) -> bool {
        self.p.is_some()
    }
}

/// Rendered depth mean and variance along the ray (distance units).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthMoments {
    pub mu: f64,
    pub var: f64,
}

pub fn termination_weights(samples: &RaySamples) -> TerminationStats {
    termination_weights_with_floor(samples, WEIGHT_FLOOR)
}

pub fn termination_weights_with_floor(samples: &RaySamples, weight_floor: f64) -> TerminationStats {
    let mut weights = Vec::with_capacity(samples.len());
    let mut transmittance = 1.0;
    for (&sigma, &delta) in samples.sigma.iter().zip(&samples.delta) {
        let tau = sigma * delta;
        let alpha = -(-tau).exp_m1();
        weights.push(transmittance * alpha);
        transmittance *= (-tau).exp();
    }
    let total_weight: f64 = weights.iter().sum();
    let p =
        (total_weight >= weight_floor).then(|| weights.iter().map(|w| w / total_weight).collect());
    TerminationStats {
        weights,
        total_weight,
        p,
    }
}

/// Mean and variance of the termination distribution.
///
/// The variance `Σpᵢtᵢ² − μ²` is evaluated in the centered form
/// `Σpᵢ(tᵢ − μ)²`, which is algebraically identical, never negative, and
/// exactly zero for a point mass. `None` for a non-terminating ray.
pub fn depth_moments(stats: &TerminationStats, t: &[f64]) -> Option<DepthMoments> {
    let p = stats.p.as_ref()?;
    Some(moments_from_probabilities(p, t))
}

pub fn moments_from_probabilities(p: &[f64], t: &[f64]) -> DepthMoments {
    let mu: f64 = p.iter().zip(t).map(|(pi, ti)| pi * ti).sum();
    let var: f64 = p
        .iter()
        .zip(t)
        .map(|(pi, ti)| pi * (ti - mu) * (ti - mu))
        .sum();
    DepthMoments {
        mu,
        var: var.max(0.0),
    }
}

/// Per-pixel render of camera-frame depth and variance.
///
/// Both maps share one validity mask; non-terminating pixels are invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedDepth {
    pub depth: DepthMap,
    pub variance: VarianceMap,
}

impl RenderedDepth {
    pub fn valid_fraction(&self) -> f64 {
        self.depth.valid_count() as f64 / self.depth.len().max(1) as f64
    }
}

/// Renders one pixel; the moments are converted from distance along the ray
/// to camera-frame `z` (`z = t · cos θ`, variance scaled by `cos² θ`).
pub fn render_pixel<F: DensityField + ?Sized>(
    field: &F,
    intr: &Intrinsics,
    pose: &Pose,
    px: Pixel,
    params: &SamplingParams,
    key: Option<RngKey>,
) -> Result<Option<DepthMoments>, VolumeError> {
    let ray = pixel_to_ray(intr, pose, px);
    let samples = sample_ray(field, &ray, params, key)?;
    let stats = termination_weights(&samples);
    let cos = intr.depth_per_distance(px);
    Ok(depth_moments(&stats, &samples.t).map(|m| DepthMoments {
        mu: m.mu * cos,
        var: (m.var * cos * cos).max(VARIANCE_FLOOR),
    }))
}

/// Renders depth and variance maps of a density field.
///
/// Jitter streams are keyed by `(seed, pixel index)`, so the result does not
/// depend on thread scheduling.
pub fn render_depth_map<F: DensityField + ?Sized>(
    field: &F,
    intr: &Intrinsics,
    pose: &Pose,
    params: &SamplingParams,
    seed: u64,
) -> Result<RenderedDepth, VolumeError> {
    params.validate()?;
    let (w, h) = (intr.width, intr.height);
    let pixels: Vec<Option<DepthMoments>> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let px = Pixel::new((idx % w) as f64, (idx / w) as f64);
            let key = RngKey {
                seed,
                stream: idx as u64,
            };
            render_pixel(field, intr, pose, px, params, Some(key))
                .expect("sampling params validated above")
        })
        .collect();

    let mut depth = DepthMap::invalid(w, h);
    let mut variance = VarianceMap::invalid(w, h);
    for (idx, m) in pixels.into_iter().enumerate() {
        if let Some(m) = m {
            depth.set_at(idx, m.mu);
            variance.set_at(idx, m.var);
        }
    }
    Ok(RenderedDepth { depth, variance })
}

/// Exact first-surface depth of an analytic scene (camera-frame `z`).
pub fn ray_cast_depth_map(scene: &AnalyticScene, intr: &Intrinsics, pose: &Pose) -> DepthMap {
    DepthMap::from_fn(intr.width, intr.height, |col, row| {
        let px = Pixel::new(col as f64, row as f64);
        let ray = pixel_to_ray(intr, pose, px);
        scene
            .first_hit(&ray)
            .map(|t| t * intr.depth_per_distance(px))
    })
}
