//! Scenes and pipeline helpers shared by the integration suites.
#![allow(dead_code)]

use bayesdepth_core::fusion::{refine, FusionConfig, NerfSource, RefinedDepth};
use bayesdepth_core::geometry::{Intrinsics, PerturbationSpec, Pose};
use bayesdepth_core::metrics::{evaluate, EdgeParams, MetricsReport};
use bayesdepth_core::simulate::{corrupt, ground_truth, Corruption};
use bayesdepth_core::volume::{AnalyticScene, Primitive, SamplingParams, Shape};
use bayesdepth_core::DepthMap;

pub fn intrinsics() -> Intrinsics {
    Intrinsics::from_fov(160, 120, 75.0).unwrap()
}

fn boxed(min: [f64; 3], max: [f64; 3], peak: f64, softness: f64) -> Primitive {
    Primitive::new(Shape::Box { min, max }, peak, softness).unwrap()
}

/// Sample range that brackets every surface of [`box_in_room`].
pub const ROOM_NEAR: f64 = 2.35;
pub const ROOM_FAR: f64 = 5.65;

/// Box-in-room scene seen from the room's center: a box on the floor, four
/// thin poles at two depths and a shelf board. Every primitive has the same
/// band half-width `softness`.
pub fn box_in_room(softness: f64) -> AnalyticScene {
    let peak = 8.0 / softness;
    let mut prims = vec![
        boxed([-2.0, -1.6, -1.0], [2.0, 1.2, 5.0], peak, softness),
        boxed([-0.9, 0.3, 2.9], [-0.2, 1.2, 3.5], peak, softness),
        boxed([-2.0, -0.4, 3.8], [-0.4, -0.32, 4.2], peak, softness),
    ];
    for (i, x) in [0.3, 0.65, 1.0, 1.35].into_iter().enumerate() {
        let z = if i % 2 == 0 { 4.1 } else { 3.5 };
        prims.push(boxed(
            [x, -1.6, z],
            [x + 0.08, 1.2, z + 0.08],
            peak,
            softness,
        ));
    }
    AnalyticScene::new(prims).unwrap()
}

/// Stratified sampling over the room's depth range.
pub fn room_sampling(samples: usize) -> SamplingParams {
    SamplingParams {
        near: ROOM_NEAR,
        far: ROOM_FAR,
        samples,
        jitter: false,
    }
}

/// Band half-width of half a sample bin, so every crossing at normal
/// incidence holds exactly one sample.
pub fn half_bin_softness(sampling: &SamplingParams) -> f64 {
    0.5 * sampling.bin_width()
}

/// Quantization variance of a depth resolved to one sample bin.
pub fn bin_variance(sampling: &SamplingParams) -> f64 {
    sampling.bin_width().powi(2) / 12.0
}

pub fn acceptance_corruption() -> Corruption {
    Corruption {
        blur_sigma_px: 3.0,
        noise_sigma_m: 0.02,
        scale: 1.1,
        shift: 0.2,
    }
}

pub fn small_perturbation(seed: u64) -> PerturbationSpec {
    PerturbationSpec {
        max_rotation_deg: 1.0,
        max_translation_m: 0.02,
        seed,
    }
}

/// One end-to-end run on an analytic scene.
pub struct Run {
    pub gt: DepthMap,
    pub mono: DepthMap,
    pub refined: RefinedDepth,
}

pub struct Setup {
    pub scene: AnalyticScene,
    pub sampling: SamplingParams,
    pub perturbation: PerturbationSpec,
    pub views: usize,
    pub corruption: Corruption,
    pub fusion: FusionConfig,
    pub seed: u64,
}

impl Setup {
    /// The box-in-room configuration of the end-to-end criterion.
    pub fn end_to_end(seed: u64) -> Self {
        Self::room(seed, 64)
    }

    /// Box-in-room with `samples` per ray; softness and variance floor
    /// follow the bin width.
    pub fn room(seed: u64, samples: usize) -> Self {
        let sampling = room_sampling(samples);
        Self {
            scene: box_in_room(half_bin_softness(&sampling)),
            sampling,
            perturbation: small_perturbation(seed),
            views: 6,
            corruption: acceptance_corruption(),
            fusion: FusionConfig {
                variance_floor: bin_variance(&sampling),
                ..FusionConfig::default()
            },
            seed,
        }
    }

    pub fn simulate(&self) -> (DepthMap, DepthMap) {
        let intr = intrinsics();
        let gt = ground_truth(&self.scene, &intr, &Pose::identity());
        let mono = corrupt(&gt, &self.corruption, self.seed);
        (gt, mono)
    }

    pub fn refine_mono(&self, mono: &DepthMap, fusion: &FusionConfig) -> RefinedDepth {
        let source = NerfSource::Field {
            field: &self.scene,
            sampling: self.sampling,
            perturbation: self.perturbation,
            views: self.views,
            render_seed: self.seed,
        };
        refine(mono, &source, &intrinsics(), &Pose::identity(), fusion).unwrap()
    }

    pub fn run(&self) -> Run {
        let (gt, mono) = self.simulate();
        let refined = self.refine_mono(&mono, &self.fusion);
        Run { gt, mono, refined }
    }
}

impl Run {
    /// Refined metrics with the monocular prior as the baseline.
    pub fn report(&self) -> MetricsReport {
        evaluate(
            &self.refined.depth,
            &self.refined.variance,
            &self.gt,
            &self.mono,
            &EdgeParams::default(),
        )
        .unwrap()
    }

    /// Monocular prior against ground truth, with itself as the baseline.
    pub fn mono_report(&self) -> MetricsReport {
        let flat = self.mono.map_valid(|_| 1.0);
        evaluate(
            &self.mono,
            &flat,
            &self.gt,
            &self.mono,
            &EdgeParams::default(),
        )
        .unwrap()
    }
}

/// Sample range that brackets every surface of [`softness_strips`].
pub const STRIPS_NEAR: f64 = 2.0;
pub const STRIPS_FAR: f64 = 6.0;

/// Eight slabs side by side at scattered depths. Slab `i` has band
/// half-width `0.04 · 1.35^i` and `peak · softness = 1`, so the spread of
/// its termination distribution grows with `i`.
pub fn softness_strips() -> AnalyticScene {
    const DEPTHS: [f64; 8] = [2.6, 4.4, 3.2, 5.0, 3.8, 2.9, 4.7, 3.5];
    let prims = DEPTHS
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            let softness = 0.04 * 1.35f64.powi(i as i32);
            let x0 = -3.2 + 0.8 * i as f64;
            boxed(
                [x0, -3.0, z],
                [x0 + 0.8, 3.0, z + 0.5],
                1.0 / softness,
                softness,
            )
        })
        .collect();
    AnalyticScene::new(prims).unwrap()
}

/// Strips configuration: no blur, so rendered-depth error dominates.
pub fn strips_setup(seed: u64) -> Setup {
    Setup {
        scene: softness_strips(),
        sampling: SamplingParams {
            near: STRIPS_NEAR,
            far: STRIPS_FAR,
            samples: 64,
            jitter: false,
        },
        perturbation: small_perturbation(seed),
        views: 6,
        corruption: Corruption {
            blur_sigma_px: 0.0,
            ..acceptance_corruption()
        },
        fusion: FusionConfig::default(),
        seed,
    }
}
