use proptest::prelude::*;

use bayesdepth_core::fusion::{bayes_fuse, fit_affine_wls, AffineCalibration, AggregatedDepth};
use bayesdepth_core::metrics::{edge_f1, median_align, median_scale, spearman};
use bayesdepth_core::volume::{termination_weights, RaySamples};
use bayesdepth_core::{DepthMap, VarianceMap};

fn agg_of(mu: Vec<f64>, var: Vec<f64>) -> AggregatedDepth {
    let n = mu.len();
    let tau = var.iter().map(|v| 1.0 / v).collect();
    AggregatedDepth {
        mu: DepthMap::from_values(n, 1, mu).unwrap(),
        var: VarianceMap::from_values(n, 1, var).unwrap(),
        tau,
    }
}

fn weighted_sse(mu: &[f64], var: &[f64], y: &[f64], a: f64, b: f64) -> f64 {
    mu.iter()
        .zip(var)
        .zip(y)
        .map(|((m, v), y)| (y - a * m - b).powi(2) / v)
        .sum()
}

proptest! {
    #[test]
    fn posterior_is_convex_and_precisions_add(
        d_o in 0.5f64..10.0,
        mu in 0.5f64..10.0,
        var in 1e-6f64..1.0,
        prior in 1e-6f64..1.0,
        a in 0.2f64..3.0,
        b in -1.0f64..1.0,
    ) {
        let mono = DepthMap::filled(1, 1, d_o);
        let agg = agg_of(vec![mu], vec![var]);
        let calib = AffineCalibration { a, b, valid: true, pixels: 1 };
        let fused = bayes_fuse(&mono, prior, &agg, &calib, 1e-12, false).unwrap();
        let d = fused.depth.at(0).unwrap();
        let d_r = a * mu + b;
        let slack = 1e-12 * d_o.abs().max(d_r.abs());
        prop_assert!(d >= d_o.min(d_r) - slack && d <= d_o.max(d_r) + slack);
        let precision = 1.0 / fused.variance.at(0).unwrap();
        let expected = 1.0 / prior + 1.0 / (a * a * var);
        prop_assert!((precision - expected).abs() <= 1e-12 * expected);
        prop_assert!(fused.variance.at(0).unwrap() <= prior.min(a * a * var) * (1.0 + 1e-12));
    }

    #[test]
    fn wls_fit_is_a_minimum(
        points in prop::collection::vec((0.5f64..8.0, 1e-3f64..0.5, -0.3f64..0.3), 3..60),
        a0 in 0.5f64..2.0,
        b0 in -1.0f64..1.0,
    ) {
        let mu: Vec<f64> = points.iter().map(|p| p.0).collect();
        let var: Vec<f64> = points.iter().map(|p| p.1).collect();
        let y: Vec<f64> = points.iter().map(|p| a0 * p.0 + b0 + p.2).collect();
        let spread = mu.iter().cloned().fold(f64::MIN, f64::max) - mu.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 0.1);
        let n = mu.len();
        let fit = fit_affine_wls(
            &agg_of(mu.clone(), var.clone()),
            &DepthMap::from_values(n, 1, y.clone()).unwrap(),
            1e-12,
            1e-12,
        ).unwrap();
        prop_assert!(fit.valid);
        let best = weighted_sse(&mu, &var, &y, fit.a, fit.b);
        for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
            prop_assert!(weighted_sse(&mu, &var, &y, fit.a + da, fit.b + db) >= best);
        }
    }

    #[test]
    fn spearman_ignores_monotone_transforms(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..80),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let x_exp: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let y_cubed: Vec<f64> = y.iter().map(|v| v.powi(3) + 2.0).collect();
        match (spearman(&x, &y), spearman(&x_exp, &y_cubed)) {
            (Some(r), Some(s)) => prop_assert!((r - s).abs() < 1e-9),
            (None, None) => {}
            (r, s) => prop_assert!(false, "{r:?} vs {s:?}"),
        }
    }

    #[test]
    fn median_alignment_is_idempotent(
        values in prop::collection::vec(0.5f64..10.0, 4..64),
        scale in 0.1f64..10.0,
    ) {
        let n = values.len();
        let gt = DepthMap::from_values(n, 1, values.clone()).unwrap();
        let pred = DepthMap::from_values(n, 1, values.iter().map(|v| v * scale + 0.01).collect()).unwrap();
        let once = median_align(&pred, &gt).unwrap();
        let s = median_scale(&once, &gt).unwrap();
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn edge_f1_is_symmetric(
        a in prop::collection::vec(1.0f64..4.0, 64),
        b in prop::collection::vec(1.0f64..4.0, 64),
        threshold in 0.1f64..1.0,
    ) {
        let x = DepthMap::from_values(8, 8, a).unwrap();
        let y = DepthMap::from_values(8, 8, b).unwrap();
        let xy = edge_f1(&x, &y, threshold, 2.0).unwrap();
        let yx = edge_f1(&y, &x, threshold, 2.0).unwrap();
        prop_assert!((xy.f1 - yx.f1).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_absorbed_fraction(
        sigma in prop::collection::vec(0.0f64..5.0, 2..64),
    ) {
        let n = sigma.len();
        let samples = RaySamples {
            t: (0..n).map(|i| 1.0 + 0.1 * i as f64).collect(),
            delta: vec![0.1; n],
            sigma: sigma.clone(),
        };
        let stats = termination_weights(&samples);
        let optical: f64 = sigma.iter().map(|s| s * 0.1).sum();
        let absorbed = 1.0 - (-optical).exp();
        prop_assert!((stats.total_weight - absorbed).abs() < 1e-12);
        prop_assert!(stats.weights.iter().all(|&w| w >= 0.0));
    }
}
