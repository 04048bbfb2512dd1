use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::grid::VoxelIndex;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryRay<T> {
    pub origin: Vec3<T>,
    direction: Vec3<T>,
}

impl<T: Real> QueryRay<T> {
    /// Normalizes `direction`; fails on zero or non-finite input.
    pub fn new(origin: Vec3<T>, direction: Vec3<T>) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::domain("ray origin must be finite"));
        }
        let direction = direction
            .normalized()
            .ok_or_else(|| Error::domain("ray direction must be non-zero and finite"))?;
        Ok(Self { origin, direction })
    }

    pub fn direction(&self) -> Vec3<T> {
        self.direction
    }

    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }
}

/// First non-free voxel along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit<T> {
    /// Distance from the ray origin to where the ray enters the voxel.
    pub distance: T,
    pub label: u8,
    pub voxel: VoxelIndex,
}

/// Deterministic azimuth × elevation fan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPattern<T> {
    pub azimuths: usize,
    pub elevations: usize,
    /// Open elevation interval in radians.
    pub elevation_range: (T, T),
    pub origin: Vec3<T>,
}

impl<T: Real> Default for RayPattern<T> {
    /// 512 azimuths × 32 elevations over (−0.35, 0.15) rad from the ego origin.
    fn default() -> Self {
        Self {
            azimuths: 512,
            elevations: 32,
            elevation_range: (T::lit(-0.35), T::lit(0.15)),
            origin: Vec3::zero(),
        }
    }
}

impl<T: Real> RayPattern<T> {
    pub fn rays(&self) -> Result<Vec<QueryRay<T>>> {
        generate_rays(
            self.azimuths,
            self.elevations,
            self.elevation_range,
            self.origin,
        )
    }
}

/// Rays through the bin centres of `azimuth_count` bins over `[-π, π)` and
/// `elevation_count` bins over `(lo, hi)`, elevation-major.
pub fn generate_rays<T: Real>(
    azimuth_count: usize,
    elevation_count: usize,
    elevation_range: (T, T),
    origin: Vec3<T>,
) -> Result<Vec<QueryRay<T>>> {
    if azimuth_count == 0 || elevation_count == 0 {
        return Err(Error::domain("ray counts must be at least 1"));
    }
    let (lo, hi) = elevation_range;
    if !(lo < hi) {
        return Err(Error::domain(format!(
            "elevation range ({lo}, {hi}) is empty"
        )));
    }
    let half = T::lit(0.5);
    let d_az = T::TAU() / T::lit(azimuth_count as f64);
    let d_el = (hi - lo) / T::lit(elevation_count as f64);
    let mut rays = Vec::with_capacity(azimuth_count * elevation_count);
    for j in 0..elevation_count {
        let el = lo + (T::lit(j as f64) + half) * d_el;
        let (se, ce) = el.sin_cos();
        for i in 0..azimuth_count {
            let az = -T::PI() + (T::lit(i as f64) + half) * d_az;
            let (sa, ca) = az.sin_cos();
            rays.push(QueryRay::new(origin, Vec3::new(ce * ca, ce * sa, se))?);
        }
    }
    Ok(rays)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn single_ray_points_forward() {
        let r = generate_rays(1, 1, (-1e-3, 1e-3), Vec3::<f64>::zero()).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0].direction().max_abs_diff(Vec3::new(1.0, 0.0, 0.0)) < 1e-15);
    }

    #[test]
    fn four_azimuths_at_bin_centres() {
        let r = generate_rays(4, 1, (-0.1, 0.1), Vec3::<f64>::zero()).unwrap();
        let az: Vec<f64> = r
            .iter()
            .map(|q| q.direction().y.atan2(q.direction().x))
            .collect();
        let expect = [-3.0 * PI / 4.0, -PI / 4.0, PI / 4.0, 3.0 * PI / 4.0];
        for (a, e) in az.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12, "{a} vs {e}");
        }
    }

    #[test]
    fn default_fan_is_unit_norm() {
        let rays = RayPattern::<f64>::default().rays().unwrap();
        assert_eq!(rays.len(), 512 * 32);
        assert!(rays
            .iter()
            .all(|r| (r.direction().norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(generate_rays(0, 1, (0.0, 1.0), Vec3::<f64>::zero()).is_err());
        assert!(generate_rays(1, 1, (1.0, 1.0), Vec3::<f64>::zero()).is_err());
        assert!(QueryRay::new(Vec3::<f64>::zero(), Vec3::zero()).is_err());
    }
}
