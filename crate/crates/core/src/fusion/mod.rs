//! Gaussian fusion of monocular and volume-rendered depth.
//!
//! One refinement step runs, per reference pixel `x`:
//!
//! 1. precision-weighted aggregation of the reprojected per-view estimates,
//!    `τ = Σ 1/σⱼ²`, `μ_agg = Σ(μⱼ/σⱼ²)/τ`, `σ²_agg = 1/τ`;
//! 2. a weighted least-squares affine map `D̃ = a·μ_agg + b` onto the
//!    monocular depth `D_o`, with weights `1/σ²_agg`;
//! 3. a moment-matching estimate of the monocular noise
//!    `σ_o² = max(0, mean(δ² − a²σ²_agg))`, `δ = D_o − D̃`;
//! 4. the product of the two Gaussians: precisions `1/σ_o²` and
//!    `1/(a²σ²_agg)` add, and the mean is their precision-weighted average.
//!
//! Pixels without any reprojected candidate keep `D_o` with variance `σ_o²`.

mod driver;

pub use driver::{
    aggregate_for, fuse_step, refine, render_iteration_views, IterationDiagnostics, NerfSource,
    RefinedDepth, StepOutput,
};

use serde::{Deserialize, Serialize};

use crate::error::FusionError;
use crate::maps::{DepthMap, VarianceMap};
use crate::views::CandidateSet;

/// Default relative threshold on the normal-equation determinant.
pub const DEGENERACY_FLOOR: f64 = 1e-12;

/// Single-component removals used for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Replace the aggregated variance with its mean over the calibration set.
    pub constant_nerf_variance: bool,
    /// Keep the minimum-depth candidate instead of precision weighting.
    pub min_aggregation: bool,
    /// Use `a = 1, b = 0`.
    pub skip_calibration: bool,
    /// Use this monocular noise variance instead of estimating it.
    pub fixed_prior_variance: Option<f64>,
    /// Ignore the monocular depth wherever rendered depth is available.
    pub drop_monocular_prior: bool,
}

impl Ablations {
    /// Enables one ablation by name; `fixed_prior_variance=<m²>` takes a value.
    pub fn enable(&mut self, spec: &str) -> Result<(), String> {
        let (name, value) = match spec.split_once('=') {
            Some((n, v)) => (n.trim(), Some(v.trim())),
            None => (spec.trim(), None),
        };
        match (name, value) {
            ("constant_nerf_variance", None) => self.constant_nerf_variance = true,
            ("min_aggregation", None) => self.min_aggregation = true,
            ("skip_calibration", None) => self.skip_calibration = true,
            ("drop_monocular_prior", None) => self.drop_monocular_prior = true,
            ("fixed_prior_variance", Some(v)) => {
                let v: f64 = v
                    .parse()
                    .map_err(|_| format!("fixed_prior_variance: cannot parse {v:?}"))?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(format!("fixed_prior_variance must be positive, got {v}"));
                }
                self.fixed_prior_variance = Some(v);
            }
            ("fixed_prior_variance", None) => {
                return Err(
                    "fixed_prior_variance needs a value, e.g. fixed_prior_variance=0.01".into(),
                )
            }
            _ => return Err(format!("unknown ablation {spec:?}")),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub iterations: usize,
    /// Views rendered per iteration; `None` uses the synthetic view count.
    pub rendered_views: Option<usize>,
    pub ablations: Ablations,
    pub variance_floor: f64,
    pub degeneracy_floor: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            iterations: 2,
            rendered_views: None,
            ablations: Ablations::default(),
            variance_floor: crate::VARIANCE_FLOOR,
            degeneracy_floor: DEGENERACY_FLOOR,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.iterations < 1 {
            return Err(FusionError::Config("iterations must be at least 1".into()));
        }
        if self.rendered_views == Some(0) {
            return Err(FusionError::Config(
                "rendered_views must be at least 1".into(),
            ));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(FusionError::Config(
                "variance_floor must be positive".into(),
            ));
        }
        if !(self.degeneracy_floor >= 0.0 && self.degeneracy_floor.is_finite()) {
            return Err(FusionError::Config(
                "degeneracy_floor must be non-negative".into(),
            ));
        }
        if let Some(v) = self.ablations.fixed_prior_variance {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FusionError::Config(
                    "fixed_prior_variance must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Per-pixel aggregate of the reprojected estimates.
///
/// `mu` and `var` are valid exactly where `tau > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedDepth {
    pub mu: DepthMap,
    pub var: VarianceMap,
    pub tau: Vec<f64>,
}

impl AggregatedDepth {
    #[inline]
    pub fn supported(&self, idx: usize) -> bool {
        self.tau[idx] > 0.0
    }

    pub fn support_fraction(&self) -> f64 {
        self.tau.iter().filter(|&&t| t > 0.0).count() as f64 / self.tau.len().max(1) as f64
    }

    /// Copy with the variance replaced by a constant on supported pixels.
    pub fn with_constant_variance(&self, var: f64) -> Self {
        let mut out = self.clone();
        out.var = self.var.map_valid(|_| var);
        for (i, t) in out.tau.iter_mut().enumerate() {
            if self.supported(i) {
                *t = 1.0 / var;
            }
        }
        out
    }

    /// Copy with depths scaled by `s` and variances by `s²`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mu: self.mu.map_valid(|m| m * s),
            var: self.var.map_valid(|v| v * s * s),
            tau: self.tau.iter().map(|t| t / (s * s)).collect(),
        }
    }
}

/// Precision-weighted aggregation of each pixel's candidates.
pub fn aggregate_views(cands: &CandidateSet) -> AggregatedDepth {
    let (w, h) = (cands.width(), cands.height());
    let mut mu = DepthMap::invalid(w, h);
    let mut var = VarianceMap::invalid(w, h);
    let mut tau = vec![0.0; w * h];
    for (idx, list) in cands.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        let mut precision = 0.0;
        let mut weighted = 0.0;
        for c in list {
            precision += 1.0 / c.var;
            weighted += c.mu / c.var;
        }
        tau[idx] = precision;
        mu.set_at(idx, weighted / precision);
        var.set_at(idx, 1.0 / precision);
    }
    AggregatedDepth { mu, var, tau }
}

/// Minimum-depth aggregation: the nearest candidate and its own variance.
pub fn aggregate_min(cands: &CandidateSet) -> AggregatedDepth {
    let (w, h) = (cands.width(), cands.height());
    let mut mu = DepthMap::invalid(w, h);
    let mut var = VarianceMap::invalid(w, h);
    let mut tau = vec![0.0; w * h];
    for (idx, list) in cands.iter().enumerate() {
        let Some(best) = list.iter().min_by(|a, b| a.mu.total_cmp(&b.mu)) else {
            continue;
        };
        tau[idx] = 1.0 / best.var;
        mu.set_at(idx, best.mu);
        var.set_at(idx, best.var);
    }
    AggregatedDepth { mu, var, tau }
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Affine map from rendered depth to monocular depth, `D̃ = a·μ + b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineCalibration {
    pub a: f64,
    pub b: f64,
    pub valid: bool,
    /// Pixels used in the fit.
    pub pixels: usize,
}

impl AffineCalibration {
    pub fn identity(pixels: usize) -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            valid: true,
            pixels,
        }
    }

    fn degenerate(pixels: usize) -> Self {
        Self {
            a: f64::NAN,
            b: f64::NAN,
            valid: false,
            pixels,
        }
    }

    #[inline]
    pub fn apply(&self, mu: f64) -> f64 {
        self.a * mu + self.b
    }
}

/// Pixels that carry both a rendered aggregate and a monocular depth.
pub fn calibration_set(agg: &AggregatedDepth, mono: &DepthMap) -> Vec<usize> {
    (0..agg.tau.len())
        .filter(|&i| agg.supported(i) && mono.is_valid_at(i))
        .collect()
}

/// Closed-form weighted least-squares fit of `D_o ≈ a·μ_agg + b` with
/// weights `1/σ²_agg`.
///
/// The fit is degenerate, and flagged invalid, when the set is empty or
/// `|S_p·S_puu − S_pu²| ≤ degeneracy_floor · S_p · S_puu`.
pub fn fit_affine_wls(
    agg: &AggregatedDepth,
    mono: &DepthMap,
    variance_floor: f64,
    degeneracy_floor: f64,
) -> Result<AffineCalibration, FusionError> {
    agg.mu.check_shape(mono)?;
    let set = calibration_set(agg, mono);
    if set.is_empty() {
        return Ok(AffineCalibration::degenerate(0));
    }
    let mut s_p = CompensatedSum::default();
    let mut s_pu = CompensatedSum::default();
    let mut s_pv = CompensatedSum::default();
    let mut s_puu = CompensatedSum::default();
    let mut s_puv = CompensatedSum::default();
    for &i in &set {
        let u = agg.mu.values()[i];
        let v = mono.values()[i];
        let p = 1.0 / agg.var.values()[i].max(variance_floor);
        s_p.add(p);
        s_pu.add(p * u);
        s_pv.add(p * v);
        s_puu.add(p * u * u);
        s_puv.add(p * u * v);
    }
    let s_p = s_p.value();
    let s_pu = s_pu.value();
    let s_pv = s_pv.value();
    let s_puu = s_puu.value();
    let s_puv = s_puv.value();

    let denom = s_p * s_puu - s_pu * s_pu;
    if !denom.is_finite() || denom.abs() <= degeneracy_floor * s_p * s_puu {
        return Ok(AffineCalibration::degenerate(set.len()));
    }
    let a = (s_p * s_puv - s_pu * s_pv) / denom;
    let b = (s_pv - a * s_pu) / s_p;
    if !(a.is_finite() && b.is_finite()) {
        return Ok(AffineCalibration::degenerate(set.len()));
    }
    Ok(AffineCalibration {
        a,
        b,
        valid: true,
        pixels: set.len(),
    })
}

/// Moment-matching estimate of the monocular noise variance,
/// `max(0, mean over the calibration set of δ² − a²σ²_agg)`.
///
/// Returns `None` when the calibration set is empty. The result is not
/// floored; callers floor it before taking reciprocals.
pub fn estimate_prior_variance(
    mono: &DepthMap,
    agg: &AggregatedDepth,
    calib: &AffineCalibration,
) -> Option<f64> {
    let set = calibration_set(agg, mono);
    if set.is_empty() {
        return None;
    }
    let a2 = calib.a * calib.a;
    let mut acc = CompensatedSum::default();
    for &i in &set {
        let delta = mono.values()[i] - calib.apply(agg.mu.values()[i]);
        acc.add(delta * delta - a2 * agg.var.values()[i]);
    }
    Some((acc.value() / set.len() as f64).max(0.0))
}

/// Fused depth and variance. Valid wherever the monocular input is valid.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedDepth {
    pub depth: DepthMap,
    pub variance: VarianceMap,
}

/// Gaussian posterior of the monocular prior and the calibrated rendered
/// depth.
///
/// `prior_variance` must already be floored. With `drop_monocular_prior`
/// the monocular precision is zero on supported pixels.
pub fn bayes_fuse(
    mono: &DepthMap,
    prior_variance: f64,
    agg: &AggregatedDepth,
    calib: &AffineCalibration,
    variance_floor: f64,
    drop_monocular_prior: bool,
) -> Result<FusedDepth, FusionError> {
    agg.mu.check_shape(mono)?;
    let (w, h) = (mono.width(), mono.height());
    let mut depth = DepthMap::invalid(w, h);
    let mut variance = VarianceMap::invalid(w, h);
    let prior_variance = prior_variance.max(variance_floor);
    let a2 = calib.a * calib.a;
    for (idx, d_o) in mono.iter_valid() {
        if !agg.supported(idx) {
            depth.set_at(idx, d_o);
            variance.set_at(idx, prior_variance);
            continue;
        }
        let d_r = calib.apply(agg.mu.values()[idx]);
        let prec_r = 1.0 / (a2 * agg.var.values()[idx]).max(variance_floor);
        let prec_o = if drop_monocular_prior {
            0.0
        } else {
            1.0 / prior_variance
        };
        let prec = prec_o + prec_r;
        depth.set_at(idx, (prec_o * d_o + prec_r * d_r) / prec);
        variance.set_at(idx, 1.0 / prec);
    }
    Ok(FusedDepth { depth, variance })
}
