//! Depth-map evaluation: median scale alignment, MSE, edge sharpness,
//! edge F1 and uncertainty/error rank correlation.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::maps::{DepthMap, FloatMap, VarianceMap};

/// Median of a non-empty slice; averages the two middle values for even
/// lengths. Reorders the slice.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mid = n / 2;
    let (lower, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        Some(upper)
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(0.5 * (below + upper))
    }
}

fn mutually_valid(a: &FloatMap, b: &FloatMap) -> Result<Vec<usize>, MetricsError> {
    a.check_shape(b)?;
    let idx: Vec<usize> = (0..a.len())
        .filter(|&i| a.is_valid_at(i) && b.is_valid_at(i))
        .collect();
    if idx.is_empty() {
        return Err(MetricsError::EmptyOverlap);
    }
    Ok(idx)
}

/// Scale `median(gt) / median(pred)` over mutually valid pixels.
pub fn median_scale(pred: &DepthMap, gt: &DepthMap) -> Result<f64, MetricsError> {
    let idx = mutually_valid(pred, gt)?;
    let mut p: Vec<f64> = idx.iter().map(|&i| pred.values()[i]).collect();
    let mut g: Vec<f64> = idx.iter().map(|&i| gt.values()[i]).collect();
    let mp = median_in_place(&mut p).ok_or(MetricsError::EmptyOverlap)?;
    let mg = median_in_place(&mut g).ok_or(MetricsError::EmptyOverlap)?;
    if mp.is_nan() || mp <= 0.0 {
        return Err(MetricsError::NonPositiveMedian);
    }
    Ok(mg / mp)
}

/// `pred · median(gt)/median(pred)`.
pub fn median_align(pred: &DepthMap, gt: &DepthMap) -> Result<DepthMap, MetricsError> {
    let s = median_scale(pred, gt)?;
    Ok(pred.map_valid(|v| v * s))
}

/// Mean squared difference over mutually valid pixels and the pixel count.
pub fn mse(pred: &DepthMap, gt: &DepthMap) -> Result<(f64, usize), MetricsError> {
    let idx = mutually_valid(pred, gt)?;
    let sum: f64 = idx
        .iter()
        .map(|&i| {
            let d = pred.values()[i] - gt.values()[i];
            d * d
        })
        .sum();
    Ok((sum / idx.len() as f64, idx.len()))
}

/// Central-difference gradient magnitude, defined at interior pixels whose
/// four neighbors are all valid.
pub fn gradient_magnitude(map: &FloatMap) -> FloatMap {
    let (w, h) = (map.width(), map.height());
    let mut out = FloatMap::invalid(w, h);
    if w < 3 || h < 3 {
        return out;
    }
    for row in 1..h - 1 {
        for col in 1..w - 1 {
            if !map.is_valid_at(map.index(col, row)) {
                continue;
            }
            let (Some(l), Some(r), Some(u), Some(d)) = (
                map.get(col - 1, row),
                map.get(col + 1, row),
                map.get(col, row - 1),
                map.get(col, row + 1),
            ) else {
                continue;
            };
            let gx = 0.5 * (r - l);
            let gy = 0.5 * (d - u);
            out.set(col, row, gx.hypot(gy));
        }
    }
    out
}

/// Mean gradient magnitude of `pred` divided by that of `baseline`, over
/// pixels where both gradients are defined. `None` when the baseline has
/// zero mean gradient.
pub fn edge_sharpness(
    pred: &DepthMap,
    baseline: &DepthMap,
) -> Result<(Option<f64>, usize), MetricsError> {
    let gp = gradient_magnitude(pred);
    let gb = gradient_magnitude(baseline);
    let idx = mutually_valid(&gp, &gb)?;
    let n = idx.len() as f64;
    let mp = idx.iter().map(|&i| gp.values()[i]).sum::<f64>() / n;
    let mb = idx.iter().map(|&i| gb.values()[i]).sum::<f64>() / n;
    Ok(((mb > 0.0).then(|| mp / mb), idx.len()))
}

/// Pixels whose gradient magnitude exceeds `threshold`.
pub fn edge_mask(map: &FloatMap, threshold: f64) -> Vec<bool> {
    let g = gradient_magnitude(map);
    (0..g.len())
        .map(|i| g.at(i).is_some_and(|v| v > threshold))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub pred_edges: usize,
    pub gt_edges: usize,
}

/// Fraction of `from` edge pixels with a `to` edge pixel within `radius`
/// (Euclidean, in pixels).
fn matched_fraction(from: &[bool], to: &[bool], width: usize, height: usize, radius: f64) -> f64 {
    let r = radius.max(0.0).floor() as isize;
    let r2 = radius * radius;
    let mut total = 0usize;
    let mut matched = 0usize;
    for (idx, _) in from.iter().enumerate().filter(|(_, &e)| e) {
        total += 1;
        let (col, row) = ((idx % width) as isize, (idx / width) as isize);
        let hit = (-r..=r).any(|dy| {
            (-r..=r).any(|dx| {
                let (c, rr) = (col + dx, row + dy);
                ((dx * dx + dy * dy) as f64) <= r2
                    && c >= 0
                    && rr >= 0
                    && (c as usize) < width
                    && (rr as usize) < height
                    && to[rr as usize * width + c as usize]
            })
        });
        if hit {
            matched += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        matched as f64 / total as f64
    }
}

/// Edge F1 with tolerant bidirectional matching.
///
/// No edges in either map scores 1; edges in exactly one map score 0.
pub fn edge_f1(
    pred: &DepthMap,
    gt: &DepthMap,
    threshold: f64,
    match_radius: f64,
) -> Result<EdgeScore, MetricsError> {
    pred.check_shape(gt)?;
    let (w, h) = (pred.width(), pred.height());
    let ep = edge_mask(pred, threshold);
    let eg = edge_mask(gt, threshold);
    let np = ep.iter().filter(|&&e| e).count();
    let ng = eg.iter().filter(|&&e| e).count();
    let score = |f1, precision, recall| EdgeScore {
        f1,
        precision,
        recall,
        pred_edges: np,
        gt_edges: ng,
    };
    match (np, ng) {
        (0, 0) => return Ok(score(1.0, 1.0, 1.0)),
        (0, _) | (_, 0) => return Ok(score(0.0, 0.0, 0.0)),
        _ => {}
    }
    let precision = matched_fraction(&ep, &eg, w, h, match_radius);
    let recall = matched_fraction(&eg, &ep, w, h, match_radius);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(score(f1, precision, recall))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start..end share ranks start+1 ..= end.
        let avg = 0.5 * ((start + 1) + end) as f64;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation; `None` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Upper edge of the uncertainty percentile bin.
    pub percentile: f64,
    pub mean_abs_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub spearman: Option<f64>,
    pub pixels: usize,
    pub curve: Vec<CurvePoint>,
}

/// Minimum overlap for the uncertainty statistics.
pub const MIN_CORRELATION_PIXELS: usize = 10;

/// Spearman ρ between predicted variance and absolute error, plus the mean
/// absolute error per uncertainty decile.
pub fn uncertainty_error_correlation(
    variance: &VarianceMap,
    abs_error: &FloatMap,
) -> Result<UncertaintyReport, MetricsError> {
    let idx = mutually_valid(variance, abs_error)?;
    if idx.len() < MIN_CORRELATION_PIXELS {
        return Err(MetricsError::EmptyOverlap);
    }
    let var: Vec<f64> = idx.iter().map(|&i| variance.values()[i]).collect();
    let err: Vec<f64> = idx.iter().map(|&i| abs_error.values()[i]).collect();
    let rho = spearman(&var, &err);

    let mut order: Vec<usize> = (0..var.len()).collect();
    order.sort_by(|&a, &b| var[a].total_cmp(&var[b]));
    let n = order.len();
    let curve = (0..10)
        .filter_map(|b| {
            let bin = &order[b * n / 10..(b + 1) * n / 10];
            (!bin.is_empty()).then(|| CurvePoint {
                percentile: 10.0 * (b + 1) as f64,
                mean_abs_error: bin.iter().map(|&i| err[i]).sum::<f64>() / bin.len() as f64,
            })
        })
        .collect();
    Ok(UncertaintyReport {
        spearman: rho,
        pixels: n,
        curve,
    })
}

/// Edge detection settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeParams {
    /// Gradient threshold as a fraction of the ground-truth depth range.
    pub threshold_fraction: f64,
    pub match_radius: f64,
}

impl Default for EdgeParams {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.05,
            match_radius: 2.0,
        }
    }
}

impl EdgeParams {
    /// Absolute gradient threshold (m/pixel) for a ground-truth map.
    pub fn threshold_for(&self, gt: &DepthMap) -> f64 {
        let (lo, hi) = gt
            .iter_valid()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
                (lo.min(v), hi.max(v))
            });
        if hi > lo {
            self.threshold_fraction * (hi - lo)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub mse_pixels: usize,
    pub baseline_mse: f64,
    /// Relative to the baseline; `None` when the baseline is flat.
    pub edge_sharpness_ratio: Option<f64>,
    pub sharpness_pixels: usize,
    pub edge_f1: f64,
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub baseline_edge_f1: f64,
    /// `None` when either variance or error is constant.
    pub uncertainty_error_spearman: Option<f64>,
    pub correlation_pixels: usize,
    pub alignment_scale: f64,
    pub edge_threshold: f64,
    pub match_radius: f64,
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
}

/// Evaluates a prediction against ground truth with `baseline` as the
/// sharpness reference. Both prediction and baseline are median-aligned to
/// the ground truth first. The uncertainty statistics are skipped (reported
/// as `None`) when there are too few pixels.
pub fn evaluate(
    pred: &DepthMap,
    variance: &VarianceMap,
    gt: &DepthMap,
    baseline: &DepthMap,
    params: &EdgeParams,
) -> Result<MetricsReport, MetricsError> {
    pred.check_shape(gt)?;
    pred.check_shape(variance)?;
    pred.check_shape(baseline)?;
    let scale = median_scale(pred, gt)?;
    let aligned = pred.map_valid(|v| v * scale);
    let baseline_aligned = median_align(baseline, gt)?;

    let (mse_value, mse_pixels) = mse(&aligned, gt)?;
    let (baseline_mse, _) = mse(&baseline_aligned, gt)?;
    let (sharpness, sharpness_pixels) = match edge_sharpness(&aligned, &baseline_aligned) {
        Ok(v) => v,
        Err(MetricsError::EmptyOverlap) => (None, 0),
        Err(e) => return Err(e),
    };
    let threshold = params.threshold_for(gt);
    let f1 = edge_f1(&aligned, gt, threshold, params.match_radius)?;
    let base_f1 = edge_f1(&baseline_aligned, gt, threshold, params.match_radius)?;

    let abs_error = FloatMap::from_fn(gt.width(), gt.height(), |c, r| {
        Some((aligned.get(c, r)? - gt.get(c, r)?).abs())
    });
    let (rho, correlation_pixels, curve) = match uncertainty_error_correlation(variance, &abs_error)
    {
        Ok(u) => (u.spearman, u.pixels, u.curve),
        Err(MetricsError::EmptyOverlap) => (None, 0, Vec::new()),
        Err(e) => return Err(e),
    };

    Ok(MetricsReport {
        mse: mse_value,
        mse_pixels,
        baseline_mse,
        edge_sharpness_ratio: sharpness,
        sharpness_pixels,
        edge_f1: f1.f1,
        edge_precision: f1.precision,
        edge_recall: f1.recall,
        baseline_edge_f1: base_f1.f1,
        uncertainty_error_spearman: rho,
        correlation_pixels,
        alignment_scale: scale,
        edge_threshold: threshold,
        match_radius: params.match_radius,
        curve,
    })
}
