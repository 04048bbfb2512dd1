//! Equidistant fisheye camera (`ρ = f·θ`).
//!
//! Pixel coordinates are continuous, with the centre of pixel `(i, j)` at
//! `(i + 0.5, j + 0.5)`. The camera frame has +z along the optical axis.

use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};
use crate::scalar::Real;

/// Largest supported full field of view, a little over 200°.
pub const MAX_FOV: f64 = std::f64::consts::PI + 0.35;

/// Points closer than this to the optical centre never project.
const MIN_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FisheyeCamera<T> {
    pub name: String,
    pub width: u32,
    pub height: u32,
    /// Pixels per radian of incidence.
    pub focal: T,
    pub cx: T,
    pub cy: T,
    /// Full field of view; incidence is limited to `fov / 2`.
    pub fov: T,
    cam_to_ego: RigidTransform<T>,
    ego_to_cam: RigidTransform<T>,
}

impl<T: Real> FisheyeCamera<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        width: u32,
        height: u32,
        focal: T,
        cx: T,
        cy: T,
        fov: T,
        cam_to_ego: RigidTransform<T>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("camera raster must be non-empty"));
        }
        if !(focal > T::zero() && focal.is_finite()) {
            return Err(Error::domain(format!(
                "focal must be positive, got {focal}"
            )));
        }
        if !(fov > T::zero() && fov <= T::lit(MAX_FOV)) {
            return Err(Error::domain(format!(
                "fov must lie in (0, π+0.35], got {fov}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::domain("principal point must be finite"));
        }
        Ok(Self {
            name: name.into(),
            width,
            height,
            focal,
            cx,
            cy,
            fov,
            ego_to_cam: cam_to_ego.inverse(),
            cam_to_ego,
        })
    }

    pub fn pose(&self) -> &RigidTransform<T> {
        &self.cam_to_ego
    }

    /// Optical centre in the ego frame.
    pub fn position(&self) -> Vec3<T> {
        self.cam_to_ego.translation()
    }

    /// Projects an ego-frame point; `None` is a miss (outside the field of
    /// view or at the optical centre), not an error.
    pub fn project(&self, p_ego: Vec3<T>) -> Option<(T, T)> {
        self.project_camera(self.ego_to_cam.transform_point(p_ego))
    }

    /// Projects a point already expressed in the camera frame.
    pub fn project_camera(&self, p: Vec3<T>) -> Option<(T, T)> {
        let lateral = p.planar_norm();
        let range = lateral.hypot(p.z);
        if !(range >= T::lit(MIN_RANGE)) {
            return None;
        }
        let incidence = lateral.atan2(p.z);
        if incidence >= self.fov * T::lit(0.5) {
            return None;
        }
        let rho = self.focal * incidence;
        let psi = p.y.atan2(p.x);
        let (s, c) = psi.sin_cos();
        Some((self.cx + rho * c, self.cy + rho * s))
    }

    /// Unit viewing direction in the camera frame for pixel `(u, v)`.
    pub fn unproject(&self, u: T, v: T) -> Result<Vec3<T>> {
        let (w, h) = (T::lit(self.width as f64), T::lit(self.height as f64));
        if !(u >= T::zero() && u <= w && v >= T::zero() && v <= h) {
            return Err(Error::domain(format!(
                "pixel ({u}, {v}) outside {}x{} raster",
                self.width, self.height
            )));
        }
        let (du, dv) = (u - self.cx, v - self.cy);
        let rho = du.hypot(dv);
        let incidence = rho / self.focal;
        if incidence >= self.fov * T::lit(0.5) {
            return Err(Error::OutOfFov {
                u: u.as_f64(),
                v: v.as_f64(),
                incidence: incidence.as_f64(),
            });
        }
        if rho == T::zero() {
            return Ok(Vec3::new(T::zero(), T::zero(), T::one()));
        }
        let (s, c) = incidence.sin_cos();
        Ok(Vec3::new(s * du / rho, s * dv / rho, c))
    }

    /// Viewing direction of pixel `(u, v)` rotated into the ego frame.
    pub fn unproject_ego(&self, u: T, v: T) -> Result<Vec3<T>> {
        Ok(self.cam_to_ego.transform_vector(self.unproject(u, v)?))
    }

    /// Whether a continuous pixel coordinate falls inside the raster.
    pub fn in_raster(&self, u: T, v: T) -> bool {
        u >= T::zero()
            && v >= T::zero()
            && u < T::lit(self.width as f64)
            && v < T::lit(self.height as f64)
    }
}

/// Free-function form of [`FisheyeCamera::project`].
pub fn fisheye_project<T: Real>(p_ego: Vec3<T>, cam: &FisheyeCamera<T>) -> Option<(T, T)> {
    cam.project(p_ego)
}

/// Free-function form of [`FisheyeCamera::unproject`].
pub fn fisheye_unproject<T: Real>(u: T, v: T, cam: &FisheyeCamera<T>) -> Result<Vec3<T>> {
    cam.unproject(u, v)
}

/// Cam-to-ego pose for a camera looking horizontally along ego azimuth `yaw`,
/// with image x to the right and image y down.
pub fn horizontal_camera_pose<T: Real>(yaw: T, position: Vec3<T>) -> RigidTransform<T> {
    let (s, c) = yaw.sin_cos();
    let forward = Vec3::new(c, s, T::zero());
    let right = Vec3::new(s, -c, T::zero());
    let down = Vec3::new(T::zero(), T::zero(), -T::one());
    RigidTransform::new(
        crate::geom::Mat3::from_columns(right, down, forward),
        position,
    )
    .expect("right/down/forward basis is proper")
}
