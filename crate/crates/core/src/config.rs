//! JSON experiment configuration.
//!
//! Relative paths in a config file resolve against the file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::fusion::FusionConfig;
use crate::geometry::{Intrinsics, PerturbationSpec, Pose};
use crate::metrics::EdgeParams;
use crate::simulate::Corruption;
use crate::volume::{AnalyticScene, SamplingParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub intrinsics: Intrinsics,
    /// Reference (world-from-camera) pose.
    #[serde(default)]
    pub pose: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbationConfig {
    pub max_rotation_deg: f64,
    pub max_translation_m: f64,
    /// Defaults to the global seed.
    pub seed: Option<u64>,
    /// Synthetic views per iteration.
    pub views: usize,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            max_rotation_deg: 2.0,
            max_translation_m: 0.02,
            seed: None,
            views: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Analytic density field; required by `simulate` and `render`.
    #[serde(default)]
    pub scene: Option<AnalyticScene>,
    /// Directory of precomputed views; replaces the density field in `refine`.
    #[serde(default)]
    pub injected_views: Option<PathBuf>,
    pub camera: CameraConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default)]
    pub fusion: FusionConfig,
    #[serde(default)]
    pub corruption: Corruption,
    #[serde(default)]
    pub edges: EdgeParams,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Command-line overrides of config fields.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub ablate: Vec<String>,
    pub views: Option<usize>,
    pub samples: Option<usize>,
}

impl ExperimentConfig {
    /// Reads, parses, resolves paths and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_json(&text, path, base)
    }

    /// Parses `text`; `origin` labels error messages and relative paths
    /// resolve against `base`.
    pub fn from_json(text: &str, origin: &Path, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            column: e.column(),
            message: strip_position(&e.to_string()),
        })?;
        if let Some(dir) = &cfg.injected_views {
            cfg.injected_views = Some(base.join(dir));
        }
        cfg.output_dir = base.join(&cfg.output_dir);
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn perturbation_spec(&self) -> PerturbationSpec {
        PerturbationSpec {
            max_rotation_deg: self.perturbation.max_rotation_deg,
            max_translation_m: self.perturbation.max_translation_m,
            seed: self.perturbation.seed.unwrap_or(self.seed),
        }
    }

    pub fn apply(&mut self, overrides: &Overrides, origin: &Path) -> Result<(), ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            path: origin.to_path_buf(),
            field: field.to_string(),
            message,
        };
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(n) = overrides.iterations {
            self.fusion.iterations = n;
        }
        if let Some(n) = overrides.views {
            self.perturbation.views = n;
        }
        if let Some(m) = overrides.samples {
            self.sampling.samples = m;
        }
        for name in &overrides.ablate {
            self.fusion
                .ablations
                .enable(name)
                .map_err(|m| invalid("--ablate", m))?;
        }
        self.validate(origin)
    }

    /// Checks every numeric bound and that referenced paths exist.
    pub fn validate(&self, origin: &Path) -> Result<(), ConfigError> {
        let invalid = |field: String, message: String| ConfigError::Invalid {
            path: origin.to_path_buf(),
            field,
            message,
        };
        match (&self.scene, &self.injected_views) {
            (None, None) => {
                return Err(invalid(
                    "scene".into(),
                    "either scene or injected_views is required".into(),
                ))
            }
            (_, Some(dir)) if !dir.is_dir() => {
                return Err(invalid(
                    "injected_views".into(),
                    format!("{} is not a directory", dir.display()),
                ))
            }
            _ => {}
        }
        if let Some(scene) = &self.scene {
            if scene.primitives.is_empty() {
                return Err(invalid(
                    "scene.primitives".into(),
                    "must not be empty".into(),
                ));
            }
            for (i, p) in scene.primitives.iter().enumerate() {
                p.validate()
                    .map_err(|e| invalid(format!("scene.primitives[{i}]"), e.to_string()))?;
            }
        }
        self.sampling
            .validate()
            .map_err(|e| invalid("sampling".into(), e.to_string()))?;
        self.fusion
            .validate()
            .map_err(|e| invalid("fusion".into(), e.to_string()))?;
        self.perturbation_spec()
            .validate()
            .map_err(|e| invalid("perturbation".into(), e.to_string()))?;
        if self.perturbation.views == 0 {
            return Err(invalid(
                "perturbation.views".into(),
                "must be at least 1".into(),
            ));
        }
        self.corruption
            .check()
            .map_err(|(field, m)| invalid(format!("corruption.{field}"), m))?;
        if !(self.edges.threshold_fraction > 0.0 && self.edges.threshold_fraction.is_finite()) {
            return Err(invalid(
                "edges.threshold_fraction".into(),
                format!("must be positive, got {}", self.edges.threshold_fraction),
            ));
        }
        if !(self.edges.match_radius >= 0.0 && self.edges.match_radius.is_finite()) {
            return Err(invalid(
                "edges.match_radius".into(),
                format!("must be non-negative, got {}", self.edges.match_radius),
            ));
        }
        Ok(())
    }
}

/// serde_json appends " at line L column C"; the position is reported
/// separately.
fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(i) => message[..i].to_string(),
        None => message.to_string(),
    }
}
