use crate::error::{Error, Result};
use crate::geom::{Mat3, Vec3};
use crate::scalar::Real;

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T> {
    rotation: Mat3<T>,
    translation: Vec3<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    /// Validating constructor: the rotation must be orthonormal with det +1.
    pub fn new(rotation: Mat3<T>, translation: Vec3<T>) -> Result<Self> {
        let tol = T::lit(T::STRUCT_TOL);
        let gram = rotation.mul_mat(&rotation.transpose());
        let ortho_err = gram.max_abs_diff(&Mat3::identity());
        let det_err = (rotation.determinant() - T::one()).abs();
        if !(ortho_err <= tol && det_err <= tol) {
            return Err(Error::domain(format!(
                "rotation is not proper orthonormal (|R·Rᵀ−I|={ortho_err}, |det−1|={det_err})"
            )));
        }
        if !translation.is_finite() {
            return Err(Error::domain("translation is not finite"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vec3<T>) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    /// Rotation about +z by `yaw` radians followed by translation `t`.
    pub fn from_yaw(yaw: T, t: Vec3<T>) -> Self {
        Self {
            rotation: Mat3::rotation_z(yaw),
            translation: t,
        }
    }

    pub fn from_axis_angle(axis: Vec3<T>, angle: T, t: Vec3<T>) -> Result<Self> {
        let r = Mat3::from_axis_angle(axis, angle)
            .ok_or_else(|| Error::domain("rotation axis has zero length"))?;
        Self::new(r, t)
    }

    /// Parses a row-major homogeneous 4×4 matrix.
    pub fn from_row_major(m: &[T; 16]) -> Result<Self> {
        let z = T::zero();
        let bottom_ok = (m[12] - z).abs() <= T::lit(T::STRUCT_TOL)
            && (m[13] - z).abs() <= T::lit(T::STRUCT_TOL)
            && (m[14] - z).abs() <= T::lit(T::STRUCT_TOL)
            && (m[15] - T::one()).abs() <= T::lit(T::STRUCT_TOL);
        if !bottom_ok {
            return Err(Error::domain("pose matrix bottom row must be (0, 0, 0, 1)"));
        }
        let rotation =
            Mat3::from_rows([[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]]);
        Self::new(rotation, Vec3::new(m[3], m[7], m[11]))
    }

    pub fn to_row_major(&self) -> [T; 16] {
        let r = &self.rotation.rows;
        let t = self.translation;
        let (z, o) = (T::zero(), T::one());
        [
            r[0][0], r[0][1], r[0][2], t.x, //
            r[1][0], r[1][1], r[1][2], t.y, //
            r[2][0], r[2][1], r[2][2], t.z, //
            z, z, z, o,
        ]
    }

    pub fn rotation(&self) -> &Mat3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3<T> {
        self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation.mul_mat(&other.rotation),
            translation: self.rotation.mul_vec(other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(v)
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        self.rotation
            .max_abs_diff(&o.rotation)
            .max(self.translation.max_abs_diff(o.translation))
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Mat3::identity() && self.translation == Vec3::zero()
    }
}

/// Applies `t` to `p`.
pub fn transform_point<T: Real>(p: Vec3<T>, t: &RigidTransform<T>) -> Vec3<T> {
    t.transform_point(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identity_leaves_points_alone() {
        let p = Vec3::new(1.5, -2.0, 0.25);
        assert_eq!(transform_point(p, &RigidTransform::identity()), p);
    }

    #[test]
    fn translation_moves_origin() {
        let t = RigidTransform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(transform_point(Vec3::zero(), &t), Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        // R_z(π/2) = [[0,-1,0],[1,0,0],[0,0,1]] ⇒ (1,0,0) ↦ (0,1,0).
        let t = RigidTransform::from_yaw(FRAC_PI_2, Vec3::zero());
        let q = transform_point(Vec3::new(1.0, 0.0, 0.0), &t);
        assert!(q.max_abs_diff(Vec3::new(0.0, 1.0, 0.0)) < 1e-15);
    }

    #[test]
    fn rejects_reflection_and_shear() {
        let refl = Mat3::from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]);
        assert!(RigidTransform::new(refl, Vec3::zero()).is_err());
        let shear = Mat3::from_rows([[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert!(RigidTransform::new(shear, Vec3::zero()).is_err());
    }

    #[test]
    fn row_major_round_trip() {
        let t = RigidTransform::from_axis_angle(
            Vec3::new(0.3, -1.0, 0.2),
            0.9,
            Vec3::new(4.0, 5.0, -6.0),
        )
        .unwrap();
        let back = RigidTransform::from_row_major(&t.to_row_major()).unwrap();
        assert_eq!(back, t);
        let mut bad = t.to_row_major();
        bad[15] = 2.0;
        assert!(RigidTransform::from_row_major(&bad).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let t = RigidTransform::<f32>::from_yaw(0.3, Vec3::new(1.0, 0.0, 0.0));
        let id = t.compose(&t.inverse());
        assert!(id.max_abs_diff(&RigidTransform::identity()) < 1e-6);
    }
}
