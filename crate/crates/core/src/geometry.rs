//! Pinhole cameras, rigid poses and rays.
//!
//! Conventions used throughout the crate:
//!
//! * Poses are **world-from-camera**: a camera-frame point `p` maps to
//!   `rotation * p + translation` in the world, so the camera center is the
//!   stored translation.
//! * The camera looks down its local `+z` axis, `x` to the right and `y` down.
//! * Pixel centers sit on integer coordinates; pixel `(u, v)` is column `u`,
//!   row `v`, and there is no half-pixel offset.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitBall, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Tolerance used to accept a rotation matrix as orthonormal.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Sub-pixel image coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Nearest integer pixel, or `None` when it falls outside the image.
    pub fn nearest(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let col = self.u.round();
        let row = self.v.round();
        if col < 0.0 || row < 0.0 || col >= width as f64 || row >= height as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }
}

/// Pinhole intrinsics in pixel units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr")]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<IntrinsicsRepr> for Intrinsics {
    type Error = GeometryError;

    fn try_from(r: IntrinsicsRepr) -> Result<Self, Self::Error> {
        Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "image size must be positive, got {width}x{height}"
            )));
        }
        if !(cx >= 0.0 && cx < width as f64 && cy >= 0.0 && cy < height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "principal point ({cx}, {cy}) outside the {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Intrinsics with a horizontal field of view and the principal point at
    /// the image center.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64) -> Result<Self, GeometryError> {
        let f = 0.5 * width as f64 / (0.5 * hfov_deg.to_radians()).tan();
        Self::new(
            f,
            f,
            0.5 * (width as f64 - 1.0),
            0.5 * (height as f64 - 1.0),
            width,
            height,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Camera-frame direction through a pixel, with unit `z` component.
    #[inline]
    pub fn unproject_unit_z(&self, px: Pixel) -> Vector3<f64> {
        Vector3::new((px.u - self.cx) / self.fx, (px.v - self.cy) / self.fy, 1.0)
    }

    /// Ratio between camera-frame depth `z` and distance along the unit ray
    /// through `px`; always in `(0, 1]`.
    #[inline]
    pub fn depth_per_distance(&self, px: Pixel) -> f64 {
        1.0 / self.unproject_unit_z(px).norm()
    }
}

/// Rigid world-from-camera transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// JSON layout: row-major rotation rows and a translation triple.
#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let r = &p.rotation;
        PoseRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl TryFrom<PoseRepr> for Pose {
    type Error = GeometryError;

    fn try_from(r: PoseRepr) -> Result<Self, Self::Error> {
        let rows = r.rotation;
        let rotation = Matrix3::new(
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        );
        Pose::new(rotation, Vector3::from(r.translation))
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    /// Builds a pose, rejecting matrices that are not proper rotations.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rotation
            .iter()
            .chain(translation.iter())
            .all(|x| x.is_finite())
        {
            return Err(GeometryError::InvalidPose("non-finite entries".into()));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        let max_dev = gram.amax();
        if max_dev > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {max_dev:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidPose(format!(
                "rotation determinant is {det}, expected 1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// `self ∘ other`, i.e. `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Rotation angle (radians) of `selfᵀ · other`.
    pub fn relative_angle(&self, other: &Pose) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        let c = ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }
}

/// Half-line `origin + t · direction`, `t ≥ 0`, with a unit direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Bounds and seed for random viewpoint perturbations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub max_rotation_deg: f64,
    pub max_translation_m: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.max_rotation_deg >= 0.0 && self.max_rotation_deg.is_finite()) {
            return Err(GeometryError::InvalidPerturbation(format!(
                "max_rotation_deg must be a finite non-negative number, got {}",
                self.max_rotation_deg
            )));
        }
        if !(self.max_translation_m >= 0.0 && self.max_translation_m.is_finite()) {
            return Err(GeometryError::InvalidPerturbation(format!(
                "max_translation_m must be a finite non-negative number, got {}",
                self.max_translation_m
            )));
        }
        Ok(())
    }
}

/// Counter-based RNG keyed by `(seed, stream)`; identical on every platform.
pub fn keyed_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// World-frame ray through a (sub-)pixel.
pub fn pixel_to_ray(intr: &Intrinsics, pose: &Pose, px: Pixel) -> Ray {
    debug_assert!(px.u >= 0.0 && px.u < intr.width as f64);
    debug_assert!(px.v >= 0.0 && px.v < intr.height as f64);
    let dir_cam = intr.unproject_unit_z(px);
    Ray {
        origin: pose.translation,
        direction: (pose.rotation * dir_cam).normalize(),
    }
}

/// Projects a world point; `None` when it lies on or behind the image plane.
///
/// Returns the (sub-)pixel position and the camera-frame depth `z`.
pub fn project(intr: &Intrinsics, pose: &Pose, point: &Vector3<f64>) -> Option<(Pixel, f64)> {
    let p = pose.inverse_transform_point(point);
    if p.z <= 0.0 {
        return None;
    }
    let px = Pixel::new(intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy);
    Some((px, p.z))
}

/// Lifts a pixel with camera-frame depth `z` into the world.
pub fn backproject(
    intr: &Intrinsics,
    pose: &Pose,
    px: Pixel,
    depth: f64,
) -> Result<Vector3<f64>, GeometryError> {
    if depth <= 0.0 || !depth.is_finite() {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    let p_cam = Vector3::new(
        depth * (px.u - intr.cx) / intr.fx,
        depth * (px.v - intr.cy) / intr.fy,
        depth,
    );
    Ok(pose.transform_point(&p_cam))
}

/// Rigid perturbation `(rotation, translation)` in the camera frame.
///
/// The angle is uniform in `[0, max_rotation_deg]` about a uniformly random
/// axis; the translation is uniform in the ball of radius
/// `max_translation_m`. Both are drawn independently from the stream
/// `(spec.seed, index)`.
pub fn sample_perturbation(spec: &PerturbationSpec, index: u64) -> (Rotation3<f64>, Vector3<f64>) {
    let mut rng = keyed_rng(spec.seed, index);
    let angle = rng.random::<f64>() * spec.max_rotation_deg.to_radians();
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let ball: [f64; 3] = UnitBall.sample(&mut rng);
    let axis = Unit::new_normalize(Vector3::from(axis));
    let rotation = Rotation3::from_axis_angle(&axis, angle);
    let translation = Vector3::from(ball) * spec.max_translation_m;
    (rotation, translation)
}

/// Perturbs `base` about its optical center.
///
/// The new camera is `base ∘ delta`: it rotates around the original camera
/// center and then shifts by the sampled offset expressed in the rotated
/// base frame, so the center moves by exactly the sampled offset length.
pub fn perturb_pose(base: &Pose, spec: &PerturbationSpec, index: u64) -> Pose {
    let (rotation, translation) = sample_perturbation(spec, index);
    let delta = Pose::from_rotation(rotation, translation);
    base.compose(&delta)
}
