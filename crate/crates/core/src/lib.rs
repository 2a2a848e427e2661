//! Bayesian refinement of monocular depth with volume-rendered depth and
//! variance.
//!
//! The pipeline renders per-pixel depth moments from a density field at
//! perturbed viewpoints, reprojects them into a reference camera, calibrates
//! them against a monocular estimate with weighted least squares, and fuses
//! the two as Gaussians.

pub mod config;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod geometry;
pub mod maps;
pub mod metrics;
pub mod pfm;
pub mod simulate;
pub mod views;
pub mod volume;

pub use error::{
    ConfigError, FusionError, GeometryError, MapError, MetricsError, PfmError, VolumeError,
};
pub use maps::{DepthMap, FloatMap, VarianceMap};

/// Lower bound applied to every variance that ends up in a denominator.
pub const VARIANCE_FLOOR: f64 = 1e-12;
