use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion};
use serde::{Deserialize, Serialize};

use super::{PointCloud, Vec3};
use crate::error::{Error, Result};

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Rotation followed by translation: `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Checks `RᵀR = I` and `det R = +1` to within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rigid transform"));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det_err = (rotation.determinant() - 1.0).abs();
        if gram_err > ORTHONORMAL_TOLERANCE || det_err > ORTHONORMAL_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal (|RᵀR - I| = {gram_err:.2e}, |det - 1| = {det_err:.2e})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        Self::from_rotation(
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle),
            translation,
        )
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self::from_rotation(q.to_rotation_matrix(), translation)
    }

    /// Row-major rotation entries followed by the translation.
    pub fn from_row_major(r: &[f64; 9], t: &[f64; 3]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(r), Vec3::new(t[0], t[1], t[2]))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
        ]
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        // acos loses precision near zero; recover small angles from the skew part.
        let s = 0.5
            * Vec3::new(
                self.rotation[(2, 1)] - self.rotation[(1, 2)],
                self.rotation[(0, 2)] - self.rotation[(2, 0)],
                self.rotation[(1, 0)] - self.rotation[(0, 1)],
            )
            .norm();
        s.atan2(c)
    }

    /// Angle of `self⁻¹ ∘ other` in radians.
    pub fn rotation_distance(&self, other: &RigidTransform) -> f64 {
        self.inverse().compose(other).angle()
    }

    /// Re-orthonormalizes the rotation through its closest unit quaternion.
    pub fn renormalized(&self) -> RigidTransform {
        RigidTransform::from_quaternion(self.quaternion(), self.translation)
    }
}

/// Applies `t` to every point (and rotates normals).
pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    let points = cloud.points().iter().map(|p| t.apply_point(p)).collect();
    let normals = cloud
        .normals()
        .map(|ns| ns.iter().map(|n| t.apply_vector(n).normalize()).collect());
    PointCloud::with_normals(points, normals).expect("rigid motion preserves cloud validity")
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    #[serde(rename = "R")]
    rotation: [f64; 9],
    t: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransformRepr {
            rotation: self.rotation_row_major(),
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        RigidTransform::from_row_major(&repr.rotation, &repr.t).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (
            prop::array::uniform3(-1.0f64..1.0),
            0.0f64..std::f64::consts::PI,
            prop::array::uniform3(-2.0f64..2.0),
        )
            .prop_filter("axis must be nonzero", |(a, _, _)| {
                Vec3::new(a[0], a[1], a[2]).norm() > 1e-3
            })
            .prop_map(|(a, angle, t)| {
                RigidTransform::from_axis_angle(
                    Vec3::new(a[0], a[1], a[2]),
                    angle,
                    Vec3::new(t[0], t[1], t[2]),
                )
            })
    }

    #[test]
    fn identity_leaves_points_alone() {
        let cloud = PointCloud::from_slices(&[[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]).unwrap();
        assert_eq!(apply_transform(&RigidTransform::identity(), &cloud), cloud);
    }

    #[test]
    fn translation_moves_origin() {
        let t = RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0));
        let cloud = PointCloud::from_slices(&[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(apply_transform(&t, &cloud).point(0), &Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn reflection_is_rejected() {
        let r = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(r, Vec3::zeros()).is_err());
    }

    #[test]
    fn small_angles_are_accurate() {
        let t = RigidTransform::from_axis_angle(Vec3::z(), 1e-10, Vec3::zeros());
        assert!((t.angle() - 1e-10).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn inverse_round_trips(t in arb_transform(), p in prop::array::uniform3(-3.0f64..3.0)) {
            let p = Vec3::new(p[0], p[1], p[2]);
            let back = t.inverse().apply_point(&t.apply_point(&p));
            prop_assert!((back - p).norm() < 1e-12);
            let id = t.compose(&t.inverse());
            prop_assert!((id.rotation() - Matrix3::identity()).abs().max() < 1e-10);
            prop_assert!(id.translation().norm() < 1e-10);
        }

        #[test]
        fn preserves_pairwise_distances(
            t in arb_transform(),
            pts in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 2..20),
        ) {
            let cloud = PointCloud::from_slices(&pts).unwrap();
            let moved = apply_transform(&t, &cloud);
            for i in 0..cloud.len() {
                for j in 0..cloud.len() {
                    let before = (cloud.point(i) - cloud.point(j)).norm();
                    let after = (moved.point(i) - moved.point(j)).norm();
                    prop_assert!((before - after).abs() < 1e-10);
                }
            }
        }
    }
}
