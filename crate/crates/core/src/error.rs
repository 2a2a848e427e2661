use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("depth must be positive and finite, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
}

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid sampling bounds: near={near}, far={far}, samples={samples}")]
    InvalidBounds { near: f64, far: f64, samples: usize },
    #[error("invalid scene primitive: {0}")]
    InvalidPrimitive(String),
}

#[derive(Debug, Error)]
pub enum MapError {
    #[error("map dimensions {got_w}x{got_h} do not match expected {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("buffer length {len} does not match {width}x{height}")]
    BadLength {
        len: usize,
        width: usize,
        height: usize,
    },
    #[error("source depth map has no valid pixels")]
    Empty,
}

#[derive(Debug, Error)]
pub enum PfmError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed PFM header: {0}")]
    Header(String),
    #[error("truncated PFM payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no mutually valid pixels")]
    EmptyOverlap,
    #[error("median of prediction is not positive")]
    NonPositiveMedian,
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("invalid fusion configuration: {0}")]
    Config(String),
    #[error("affine calibration was degenerate on every iteration")]
    DegenerateEverywhere,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {field}: {message}")]
    Invalid {
        path: PathBuf,
        field: String,
        message: String,
    },
}
