//! Analytic density fields built from planes, spheres and boxes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::VolumeError;
use crate::geometry::Ray;

/// Scalar density `σ(x) ≥ 0` in 1/m.
///
/// Implementations are evaluated concurrently from many threads.
pub trait DensityField: Sync {
    fn density(&self, point: &Vector3<f64>) -> f64;
}

impl<F: DensityField + ?Sized> DensityField for &F {
    fn density(&self, point: &Vector3<f64>) -> f64 {
        (**self).density(point)
    }
}

/// Surface shape of a primitive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    /// Points with `normal · x = offset`; `normal` need not be unit length.
    Plane {
        normal: [f64; 3],
        offset: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    /// Axis-aligned box.
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
}

impl Shape {
    /// Signed distance to the surface (negative inside spheres and boxes,
    /// behind the normal for planes).
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Shape::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                let len = n.norm();
                (n.dot(p) - offset) / len
            }
            Shape::Sphere { center, radius } => (p - Vector3::from(*center)).norm() - radius,
            Shape::Box { min, max } => {
                let lo = Vector3::from(*min);
                let hi = Vector3::from(*max);
                let center = (lo + hi) * 0.5;
                let half = (hi - lo) * 0.5;
                let q = (p - center).abs() - half;
                let outside = q.map(|c| c.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
        }
    }

    /// Smallest `t > 0` where the ray crosses the surface.
    pub fn first_hit(&self, ray: &Ray) -> Option<f64> {
        let o = &ray.origin;
        let d = &ray.direction;
        match self {
            Shape::Plane { normal, offset } => {
                let n = Vector3::from(*normal);
                let denom = n.dot(d);
                if denom == 0.0 {
                    return None;
                }
                let t = (offset - n.dot(o)) / denom;
                (t > 0.0).then_some(t)
            }
            Shape::Sphere { center, radius } => {
                let oc = o - Vector3::from(*center);
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let root = disc.sqrt();
                let t0 = -b - root;
                let t1 = -b + root;
                if t0 > 0.0 {
                    Some(t0)
                } else if t1 > 0.0 {
                    Some(t1)
                } else {
                    None
                }
            }
            Shape::Box { min, max } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                for axis in 0..3 {
                    if d[axis] == 0.0 {
                        if o[axis] < min[axis] || o[axis] > max[axis] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / d[axis];
                    let mut t0 = (min[axis] - o[axis]) * inv;
                    let mut t1 = (max[axis] - o[axis]) * inv;
                    if t0 > t1 {
                        std::mem::swap(&mut t0, &mut t1);
                    }
                    t_near = t_near.max(t0);
                    t_far = t_far.min(t1);
                }
                if t_near > t_far {
                    None
                } else if t_near > 0.0 {
                    Some(t_near)
                } else if t_far > 0.0 {
                    Some(t_far)
                } else {
                    None
                }
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Shape::Plane { normal, offset } => {
                if !finite(normal) || !offset.is_finite() || Vector3::from(*normal).norm() == 0.0 {
                    return Err("plane needs a finite non-zero normal".into());
                }
            }
            Shape::Sphere { center, radius } => {
                if !finite(center) || *radius <= 0.0 || !radius.is_finite() {
                    return Err(format!("sphere radius must be positive, got {radius}"));
                }
            }
            Shape::Box { min, max } => {
                if !finite(min) || !finite(max) || (0..3).any(|i| min[i] >= max[i]) {
                    return Err("box needs min < max on every axis".into());
                }
            }
        }
        Ok(())
    }
}

/// A surface with a triangular density band around it.
///
/// `σ(x) = peak_density · max(0, 1 − |sd(x)| / softness)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    #[serde(flatten)]
    pub shape: Shape,
    pub peak_density: f64,
    pub softness: f64,
}

impl Primitive {
    pub fn new(shape: Shape, peak_density: f64, softness: f64) -> Result<Self, VolumeError> {
        let p = Self {
            shape,
            peak_density,
            softness,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        self.shape
            .validate()
            .map_err(VolumeError::InvalidPrimitive)?;
        if !(self.peak_density >= 0.0 && self.peak_density.is_finite()) {
            return Err(VolumeError::InvalidPrimitive(format!(
                "peak_density must be non-negative, got {}",
                self.peak_density
            )));
        }
        if !(self.softness > 0.0 && self.softness.is_finite()) {
            return Err(VolumeError::InvalidPrimitive(format!(
                "softness must be positive, got {}",
                self.softness
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn density(&self, p: &Vector3<f64>) -> f64 {
        let sd = self.shape.signed_distance(p).abs();
        self.peak_density * (1.0 - sd / self.softness).max(0.0)
    }
}

/// Union of primitives; density is the pointwise maximum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self, VolumeError> {
        let scene = Self { primitives };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Distance to the nearest surface crossing along the ray, ignoring the
    /// density bands. This is the zero-softness limit of the rendered depth.
    pub fn first_hit(&self, ray: &Ray) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.shape.first_hit(ray))
            .min_by(f64::total_cmp)
    }
}

impl DensityField for AnalyticScene {
    fn density(&self, point: &Vector3<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|p| p.density(point))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ray_z() -> Ray {
        Ray::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0))
    }

    #[test]
    fn box_signed_distance() {
        let b = Shape::Box {
            min: [-1.0, -1.0, -1.0],
            max: [1.0, 1.0, 1.0],
        };
        assert!((b.signed_distance(&Vector3::zeros()) + 1.0).abs() < 1e-15);
        assert!((b.signed_distance(&Vector3::new(3.0, 0.0, 0.0)) - 2.0).abs() < 1e-15);
        let corner = b.signed_distance(&Vector3::new(2.0, 2.0, 1.0));
        assert!((corner - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn hits_from_outside_and_inside() {
        let plane = Shape::Plane {
            normal: [0.0, 0.0, 2.0],
            offset: 4.0,
        };
        assert_eq!(plane.first_hit(&ray_z()), Some(2.0));
        let sphere = Shape::Sphere {
            center: [0.0, 0.0, 5.0],
            radius: 1.0,
        };
        assert_eq!(sphere.first_hit(&ray_z()), Some(4.0));
        let room = Shape::Box {
            min: [-2.0, -2.0, -1.0],
            max: [2.0, 2.0, 3.0],
        };
        assert_eq!(room.first_hit(&ray_z()), Some(3.0));
        let behind = Shape::Sphere {
            center: [0.0, 0.0, -5.0],
            radius: 1.0,
        };
        assert_eq!(behind.first_hit(&ray_z()), None);
    }

    #[test]
    fn density_profile_is_triangular() {
        let p = Primitive::new(
            Shape::Plane {
                normal: [0.0, 0.0, 1.0],
                offset: 2.0,
            },
            10.0,
            0.5,
        )
        .unwrap();
        assert_eq!(p.density(&Vector3::new(0.0, 0.0, 2.0)), 10.0);
        assert!((p.density(&Vector3::new(0.0, 0.0, 1.75)) - 5.0).abs() < 1e-12);
        assert!((p.density(&Vector3::new(0.0, 0.0, 2.25)) - 5.0).abs() < 1e-12);
        assert_eq!(p.density(&Vector3::new(0.0, 0.0, 1.0)), 0.0);
    }

    #[test]
    fn scene_takes_max_and_nearest_hit() {
        let scene = AnalyticScene::new(vec![
            Primitive::new(
                Shape::Sphere {
                    center: [0.0, 0.0, 5.0],
                    radius: 2.0,
                },
                5.0,
                0.1,
            )
            .unwrap(),
            Primitive::new(
                Shape::Sphere {
                    center: [0.0, 0.0, 5.0],
                    radius: 1.0,
                },
                8.0,
                0.1,
            )
            .unwrap(),
        ])
        .unwrap();
        assert_eq!(scene.first_hit(&ray_z()), Some(3.0));
        assert_eq!(scene.density(&Vector3::new(0.0, 0.0, 4.0)), 8.0);
        assert_eq!(scene.density(&Vector3::new(0.0, 0.0, 3.0)), 5.0);
    }

    #[test]
    fn invalid_primitives_rejected() {
        let s = Shape::Sphere {
            center: [0.0; 3],
            radius: 1.0,
        };
        assert!(Primitive::new(s.clone(), -1.0, 0.1).is_err());
        assert!(Primitive::new(s.clone(), 1.0, 0.0).is_err());
        let b = Shape::Box {
            min: [0.0; 3],
            max: [1.0, 0.0, 1.0],
        };
        assert!(Primitive::new(b, 1.0, 0.1).is_err());
    }

    #[test]
    fn json_layout() {
        let json = r#"{"primitives":[
            {"type":"plane","normal":[0,0,-1],"offset":-4,"peak_density":20,"softness":0.05},
            {"type":"box","min":[-1,-1,2],"max":[1,1,3],"peak_density":20,"softness":0.05}
        ]}"#;
        let scene: AnalyticScene = serde_json::from_str(json).unwrap();
        assert_eq!(scene.primitives.len(), 2);
        assert!(matches!(scene.primitives[1].shape, Shape::Box { .. }));
        scene.validate().unwrap();
    }
}
