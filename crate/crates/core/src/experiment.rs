//! The simulate → refine → eval workflow over files.
//!
//! Every command computes all of its results before writing anything, and
//! each file is written atomically.

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::config::ExperimentConfig;
use crate::error::{ConfigError, FusionError, MapError, MetricsError, PfmError};
use crate::fusion::{refine, IterationDiagnostics, NerfSource, RefinedDepth};
use crate::geometry::{Intrinsics, Pose};
use crate::maps::{DepthMap, VarianceMap};
use crate::metrics::{evaluate, EdgeParams, MetricsReport};
use crate::pfm;
use crate::simulate::{corrupt, ground_truth};
use crate::views::RenderedView;
use crate::volume::{render_depth_map, AnalyticScene};

pub const GT_DEPTH: &str = "gt_depth.pfm";
pub const MONO_DEPTH: &str = "mono_depth.pfm";
pub const REFINED_DEPTH: &str = "refined_depth.pfm";
pub const REFINED_VARIANCE: &str = "refined_variance.pfm";
pub const DIAGNOSTICS: &str = "diagnostics.json";
pub const METRICS: &str = "metrics.json";
pub const CURVE: &str = "curve.csv";
pub const RENDER_DEPTH: &str = "render_depth.pfm";
pub const RENDER_VARIANCE: &str = "render_variance.pfm";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Pfm {
        path: PathBuf,
        #[source]
        source: PfmError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    Map {
        context: String,
        #[source]
        source: MapError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

impl ExperimentError {
    /// 2 for configuration, 3 for input/output, 4 for a degenerate pipeline.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => 2,
            Self::Fusion(FusionError::DegenerateEverywhere) => 4,
            Self::Fusion(FusionError::Config(_) | FusionError::Volume(_)) => 2,
            Self::Fusion(FusionError::Map(_)) => 3,
            Self::Pfm { .. }
            | Self::Io { .. }
            | Self::Json { .. }
            | Self::Map { .. }
            | Self::Metrics(_) => 3,
        }
    }
}

fn read_pfm(path: &Path) -> Result<DepthMap, ExperimentError> {
    pfm::read(path).map_err(|source| ExperimentError::Pfm {
        path: path.to_path_buf(),
        source,
    })
}

/// A file ready to be written.
struct Output {
    path: PathBuf,
    bytes: Vec<u8>,
}

fn write_all(dir: &Path, outputs: Vec<Output>) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(|source| ExperimentError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    outputs
        .into_iter()
        .map(|o| {
            pfm::write_atomic(&o.path, &o.bytes).map_err(|source| ExperimentError::Io {
                path: o.path.clone(),
                source,
            })?;
            Ok(o.path)
        })
        .collect()
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report types serialize");
    bytes.push(b'\n');
    bytes
}

fn check_dims(map: &DepthMap, intr: &Intrinsics, context: &str) -> Result<(), ExperimentError> {
    if map.width() == intr.width && map.height() == intr.height {
        return Ok(());
    }
    Err(ExperimentError::Map {
        context: context.to_string(),
        source: MapError::DimensionMismatch {
            want_w: intr.width,
            want_h: intr.height,
            got_w: map.width(),
            got_h: map.height(),
        },
    })
}

fn require_scene(cfg: &ExperimentConfig) -> Result<&AnalyticScene, ExperimentError> {
    cfg.scene.as_ref().ok_or_else(|| {
        ExperimentError::Usage("this command needs an analytic scene in the config".into())
    })
}

/// Ground truth and corrupted monocular depth.
pub struct Simulated {
    pub gt: DepthMap,
    pub mono: DepthMap,
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulated, ExperimentError> {
    let scene = require_scene(cfg)?;
    let gt = ground_truth(scene, &cfg.camera.intrinsics, &cfg.camera.pose);
    let mono = corrupt(&gt, &cfg.corruption, cfg.seed);
    Ok(Simulated { gt, mono })
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, ExperimentError> {
    let s = simulate(cfg)?;
    let dir = &cfg.output_dir;
    write_all(
        dir,
        vec![
            Output {
                path: dir.join(GT_DEPTH),
                bytes: pfm::encode(&s.gt),
            },
            Output {
                path: dir.join(MONO_DEPTH),
                bytes: pfm::encode(&s.mono),
            },
        ],
    )
}

/// Loads `view_{i}_depth.pfm`, `view_{i}_var.pfm` and `view_{i}_pose.json`
/// for consecutive `i`, starting at 0 or 1 and stopping at the first gap.
pub fn load_injected_views(
    dir: &Path,
    intr: &Intrinsics,
) -> Result<Vec<RenderedView>, ExperimentError> {
    let depth_path = |i: usize| dir.join(format!("view_{i}_depth.pfm"));
    let start = if depth_path(0).exists() { 0 } else { 1 };
    let mut views = Vec::new();
    for i in start.. {
        let dp = depth_path(i);
        if !dp.exists() {
            break;
        }
        let vp = dir.join(format!("view_{i}_var.pfm"));
        let pp = dir.join(format!("view_{i}_pose.json"));
        let depth = read_pfm(&dp)?;
        let variance = read_pfm(&vp)?;
        check_dims(&depth, intr, &dp.display().to_string())?;
        check_dims(&variance, intr, &vp.display().to_string())?;
        let text = std::fs::read_to_string(&pp).map_err(|source| ExperimentError::Io {
            path: pp.clone(),
            source,
        })?;
        let pose: Pose = serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
            path: pp.clone(),
            source,
        })?;
        views.push(RenderedView {
            pose,
            depth,
            variance,
        });
    }
    if views.is_empty() {
        return Err(ExperimentError::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "no view_<i>_depth.pfm files",
            ),
        });
    }
    Ok(views)
}

/// Writes views in the layout read by [`load_injected_views`], numbered from 0.
pub fn write_injected_views(dir: &Path, views: &[RenderedView]) -> Result<(), ExperimentError> {
    let outputs = views
        .iter()
        .enumerate()
        .flat_map(|(i, v)| {
            [
                Output {
                    path: dir.join(format!("view_{i}_depth.pfm")),
                    bytes: pfm::encode(&v.depth),
                },
                Output {
                    path: dir.join(format!("view_{i}_var.pfm")),
                    bytes: pfm::encode(&v.variance),
                },
                Output {
                    path: dir.join(format!("view_{i}_pose.json")),
                    bytes: json_bytes(&v.pose),
                },
            ]
        })
        .collect();
    write_all(dir, outputs).map(|_| ())
}

/// Runs the refinement loop on `mono` using the configured view source.
pub fn refine_with_config(
    cfg: &ExperimentConfig,
    mono: &DepthMap,
) -> Result<RefinedDepth, ExperimentError> {
    let intr = &cfg.camera.intrinsics;
    check_dims(mono, intr, "monocular depth")?;
    let refined = match &cfg.injected_views {
        Some(dir) => {
            let views = load_injected_views(dir, intr)?;
            refine(
                mono,
                &NerfSource::Injected(&views),
                intr,
                &cfg.camera.pose,
                &cfg.fusion,
            )?
        }
        None => {
            let scene = require_scene(cfg)?;
            let source = NerfSource::Field {
                field: scene,
                sampling: cfg.sampling,
                perturbation: cfg.perturbation_spec(),
                views: cfg.perturbation.views,
                render_seed: cfg.seed,
            };
            refine(mono, &source, intr, &cfg.camera.pose, &cfg.fusion)?
        }
    };
    if refined.all_degenerate() {
        return Err(FusionError::DegenerateEverywhere.into());
    }
    Ok(refined)
}

#[derive(Serialize)]
struct DiagnosticsReport<'a> {
    seed: u64,
    views: usize,
    samples: usize,
    ablations: &'a crate::fusion::Ablations,
    iterations: &'a [IterationDiagnostics],
}

/// Refines `mono` (default `<output_dir>/mono_depth.pfm`).
pub fn cmd_refine(
    cfg: &ExperimentConfig,
    mono_path: Option<&Path>,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let dir = &cfg.output_dir;
    let mono_path = mono_path.map_or_else(|| dir.join(MONO_DEPTH), Path::to_path_buf);
    let mono = read_pfm(&mono_path)?;
    let refined = refine_with_config(cfg, &mono)?;
    let report = DiagnosticsReport {
        seed: cfg.seed,
        views: cfg.perturbation.views,
        samples: cfg.sampling.samples,
        ablations: &cfg.fusion.ablations,
        iterations: &refined.diagnostics,
    };
    write_all(
        dir,
        vec![
            Output {
                path: dir.join(REFINED_DEPTH),
                bytes: pfm::encode(&refined.depth),
            },
            Output {
                path: dir.join(REFINED_VARIANCE),
                bytes: pfm::encode(&refined.variance),
            },
            Output {
                path: dir.join(DIAGNOSTICS),
                bytes: json_bytes(&report),
            },
        ],
    )
}

/// Input files of the evaluation.
pub struct EvalInputs<'a> {
    pub pred: &'a Path,
    pub variance: &'a Path,
    pub gt: &'a Path,
    pub baseline: &'a Path,
}

pub fn eval_files(
    inputs: &EvalInputs<'_>,
    edges: &EdgeParams,
) -> Result<MetricsReport, ExperimentError> {
    let pred = read_pfm(inputs.pred)?;
    let variance: VarianceMap = read_pfm(inputs.variance)?;
    let gt = read_pfm(inputs.gt)?;
    let baseline = read_pfm(inputs.baseline)?;
    Ok(evaluate(&pred, &variance, &gt, &baseline, edges)?)
}

/// Error-versus-uncertainty curve as CSV.
pub fn curve_csv(report: &MetricsReport) -> String {
    let mut out = String::from("percentile,mean_abs_error\n");
    for p in &report.curve {
        out.push_str(&format!("{},{}\n", p.percentile, p.mean_abs_error));
    }
    out
}

pub fn cmd_eval(
    inputs: &EvalInputs<'_>,
    edges: &EdgeParams,
    out_dir: &Path,
) -> Result<(MetricsReport, Vec<PathBuf>), ExperimentError> {
    let report = eval_files(inputs, edges)?;
    let written = write_all(
        out_dir,
        vec![
            Output {
                path: out_dir.join(METRICS),
                bytes: json_bytes(&report),
            },
            Output {
                path: out_dir.join(CURVE),
                bytes: curve_csv(&report).into_bytes(),
            },
        ],
    )?;
    Ok((report, written))
}

/// Renders depth and variance of the scene at `pose` (default: the camera pose).
pub fn cmd_render(
    cfg: &ExperimentConfig,
    pose: Option<&Pose>,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let scene = require_scene(cfg)?;
    let pose = pose.unwrap_or(&cfg.camera.pose);
    let r = render_depth_map(scene, &cfg.camera.intrinsics, pose, &cfg.sampling, cfg.seed)
        .map_err(FusionError::from)?;
    let dir = &cfg.output_dir;
    write_all(
        dir,
        vec![
            Output {
                path: dir.join(RENDER_DEPTH),
                bytes: pfm::encode(&r.depth),
            },
            Output {
                path: dir.join(RENDER_VARIANCE),
                bytes: pfm::encode(&r.variance),
            },
        ],
    )
}
