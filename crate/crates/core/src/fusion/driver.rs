use serde::{Deserialize, Serialize};

use super::{
    aggregate_min, aggregate_views, bayes_fuse, calibration_set, estimate_prior_variance,
    fit_affine_wls, AffineCalibration, AggregatedDepth, FusionConfig,
};
use crate::error::FusionError;
use crate::geometry::{perturb_pose, Intrinsics, PerturbationSpec, Pose};
use crate::maps::{DepthMap, VarianceMap};
use crate::views::{reproject_to_reference, synthesize_views_at, RenderedView};
use crate::volume::{render_depth_map, DensityField, SamplingParams};

/// Where per-view rendered depth and variance come from.
pub enum NerfSource<'a> {
    /// Render an analytic density field at freshly perturbed poses every
    /// iteration.
    Field {
        field: &'a dyn DensityField,
        sampling: SamplingParams,
        perturbation: PerturbationSpec,
        /// Synthetic (warped) views per iteration.
        views: usize,
        /// Seed of the sampling jitter streams.
        render_seed: u64,
    },
    /// Precomputed views, reused on every iteration.
    Injected(&'a [RenderedView]),
}

/// Diagnostics of one refinement iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// `None` when the calibration was degenerate.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub sigma_o2: f64,
    pub support_fraction: f64,
    pub hole_fraction: f64,
    pub calibrated: bool,
}

/// Output of the refinement loop.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinedDepth {
    pub depth: DepthMap,
    pub variance: VarianceMap,
    pub diagnostics: Vec<IterationDiagnostics>,
}

impl RefinedDepth {
    /// True when no iteration produced a usable calibration.
    pub fn all_degenerate(&self) -> bool {
        self.diagnostics.iter().all(|d| !d.calibrated)
    }
}

/// Result of one fusion step given an aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub depth: DepthMap,
    pub variance: VarianceMap,
    pub calibration: AffineCalibration,
    pub sigma_o2: f64,
    pub support_fraction: f64,
}

/// Calibrates, estimates the prior noise and fuses, honoring ablations.
///
/// A degenerate calibration (or an empty calibration set) leaves the depth
/// unchanged. Its variance is then the noise estimate under the identity
/// calibration, or infinite when nothing overlaps.
pub fn fuse_step(
    mono: &DepthMap,
    agg: &AggregatedDepth,
    config: &FusionConfig,
) -> Result<StepOutput, FusionError> {
    let ab = &config.ablations;
    let set = calibration_set(agg, mono);

    let constant;
    let agg = if ab.constant_nerf_variance && !set.is_empty() {
        let mean = set.iter().map(|&i| agg.var.values()[i]).sum::<f64>() / set.len() as f64;
        constant = agg.with_constant_variance(mean);
        &constant
    } else {
        agg
    };

    let calibration = if ab.skip_calibration {
        if set.is_empty() {
            AffineCalibration {
                valid: false,
                ..AffineCalibration::identity(0)
            }
        } else {
            AffineCalibration::identity(set.len())
        }
    } else {
        fit_affine_wls(agg, mono, config.variance_floor, config.degeneracy_floor)?
    };

    let support_fraction = agg.support_fraction();
    if !calibration.valid {
        let sigma_o2 = ab.fixed_prior_variance.unwrap_or_else(|| {
            estimate_prior_variance(mono, agg, &AffineCalibration::identity(set.len()))
                .map_or(f64::INFINITY, |v| v.max(config.variance_floor))
        });
        let variance = mono.map_valid(|_| sigma_o2);
        return Ok(StepOutput {
            depth: mono.clone(),
            variance,
            calibration,
            sigma_o2,
            support_fraction,
        });
    }

    let sigma_o2 = match ab.fixed_prior_variance {
        Some(v) => v,
        None => estimate_prior_variance(mono, agg, &calibration)
            .expect("calibration set is non-empty when the fit is valid"),
    }
    .max(config.variance_floor);

    let fused = bayes_fuse(
        mono,
        sigma_o2,
        agg,
        &calibration,
        config.variance_floor,
        ab.drop_monocular_prior,
    )?;
    Ok(StepOutput {
        depth: fused.depth,
        variance: fused.variance,
        calibration,
        sigma_o2,
        support_fraction,
    })
}

/// Aggregates candidates with the configured rule. Candidate variances are
/// floored at `config.variance_floor` first.
pub fn aggregate_for(
    views: &[RenderedView],
    intr: &Intrinsics,
    reference: &Pose,
    config: &FusionConfig,
) -> Result<AggregatedDepth, FusionError> {
    let mut cands = reproject_to_reference(views, intr, reference)?;
    if config.variance_floor > crate::VARIANCE_FLOOR {
        cands = cands.with_variance_floor(config.variance_floor);
    }
    Ok(if config.ablations.min_aggregation {
        aggregate_min(&cands)
    } else {
        aggregate_views(&cands)
    })
}

/// Renders the views of one iteration from a density field.
///
/// Iteration `k` uses perturbation indices `k·n + 1 ..= k·n + n` with
/// `n = max(views, rendered views)`, so every iteration sees new poses.
#[allow(clippy::too_many_arguments)]
pub fn render_iteration_views(
    field: &dyn DensityField,
    intr: &Intrinsics,
    base: &Pose,
    sampling: &SamplingParams,
    perturbation: &PerturbationSpec,
    count: usize,
    stride: usize,
    iteration: usize,
    render_seed: u64,
) -> Result<Vec<RenderedView>, FusionError> {
    (0..count)
        .map(|i| {
            let index = (iteration * stride + i + 1) as u64;
            let pose = perturb_pose(base, perturbation, index);
            let r = render_depth_map(
                field,
                intr,
                &pose,
                sampling,
                render_seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            )?;
            Ok(RenderedView {
                pose,
                depth: r.depth,
                variance: r.variance,
            })
        })
        .collect()
}

/// Iterative refinement of a monocular depth map.
///
/// Each iteration warps the current depth into the view poses (for the hole
/// statistic), obtains rendered views, reprojects and aggregates them,
/// calibrates, re-estimates the monocular noise and fuses. The fused depth
/// is the monocular input of the next iteration.
pub fn refine(
    mono: &DepthMap,
    source: &NerfSource<'_>,
    intr: &Intrinsics,
    pose: &Pose,
    config: &FusionConfig,
) -> Result<RefinedDepth, FusionError> {
    config.validate()?;
    if mono.width() != intr.width || mono.height() != intr.height {
        return Err(crate::error::MapError::DimensionMismatch {
            want_w: intr.width,
            want_h: intr.height,
            got_w: mono.width(),
            got_h: mono.height(),
        }
        .into());
    }

    let mut current = mono.clone();
    let mut variance = VarianceMap::invalid(mono.width(), mono.height());
    let mut diagnostics = Vec::with_capacity(config.iterations);

    for k in 0..config.iterations {
        let (views, warp_poses) = match source {
            NerfSource::Field {
                field,
                sampling,
                perturbation,
                views,
                render_seed,
            } => {
                let rendered_count = config.rendered_views.unwrap_or(*views);
                let stride = rendered_count.max(*views);
                let warp_poses: Vec<Pose> = (0..*views)
                    .map(|i| perturb_pose(pose, perturbation, (k * stride + i + 1) as u64))
                    .collect();
                let rendered = render_iteration_views(
                    *field,
                    intr,
                    pose,
                    sampling,
                    perturbation,
                    rendered_count,
                    stride,
                    k,
                    *render_seed,
                )?;
                (rendered, warp_poses)
            }
            NerfSource::Injected(views) => {
                let poses = views.iter().map(|v| v.pose).collect();
                (views.to_vec(), poses)
            }
        };

        let hole_fraction = if current.valid_count() > 0 && !warp_poses.is_empty() {
            let synthetic = synthesize_views_at(&current, intr, pose, &warp_poses)?;
            synthetic.iter().map(|v| v.hole_fraction).sum::<f64>() / synthetic.len() as f64
        } else {
            0.0
        };

        let agg = aggregate_for(&views, intr, pose, config)?;
        let step = fuse_step(&current, &agg, config)?;
        diagnostics.push(IterationDiagnostics {
            iteration: k + 1,
            a: step.calibration.valid.then_some(step.calibration.a),
            b: step.calibration.valid.then_some(step.calibration.b),
            sigma_o2: step.sigma_o2,
            support_fraction: step.support_fraction,
            hole_fraction,
            calibrated: step.calibration.valid,
        });
        current = step.depth;
        variance = step.variance;
    }

    Ok(RefinedDepth {
        depth: current,
        variance,
        diagnostics,
    })
}
