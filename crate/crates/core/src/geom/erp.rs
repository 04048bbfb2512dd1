//! Equirectangular rasters and depth lifting.

use crate::error::{Error, Result};
use crate::geom::{RigidTransform, Vec3};
use crate::scalar::Real;

/// Label given to lifted points when no semantic raster is supplied.
pub const UNLABELED: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RasterKind {
    /// Radial distance in meters; 0 marks an invalid pixel.
    Depth,
    /// Class ids stored as exact small integers.
    Semantic,
    Feature,
}

impl RasterKind {
    pub fn code(self) -> u8 {
        match self {
            RasterKind::Depth => 0,
            RasterKind::Semantic => 1,
            RasterKind::Feature => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(RasterKind::Depth),
            1 => Some(RasterKind::Semantic),
            2 => Some(RasterKind::Feature),
            _ => None,
        }
    }
}

/// Row-major raster of `f32` values with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ErpImage {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub kind: RasterKind,
    data: Vec<f32>,
}

impl ErpImage {
    pub fn new(
        width: u32,
        height: u32,
        channels: u32,
        kind: RasterKind,
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::shape("raster dimensions must be non-zero"));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(Error::shape(format!(
                "raster payload has {} values, expected {expected}",
                data.len()
            )));
        }
        match kind {
            RasterKind::Depth => {
                if channels != 1 {
                    return Err(Error::shape("depth rasters have exactly one channel"));
                }
                if let Some(bad) = data.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
                    return Err(Error::domain(format!(
                        "depth value {bad} is not finite and ≥ 0"
                    )));
                }
            }
            RasterKind::Semantic => {
                if channels != 1 {
                    return Err(Error::shape("semantic rasters have exactly one channel"));
                }
                if let Some(bad) = data
                    .iter()
                    .find(|d| !(d.is_finite() && **d >= 0.0 && **d <= 255.0 && d.fract() == 0.0))
                {
                    return Err(Error::domain(format!(
                        "semantic value {bad} is not a class id"
                    )));
                }
            }
            RasterKind::Feature => {
                if data.iter().any(|d| !d.is_finite()) {
                    return Err(Error::domain("feature raster contains non-finite values"));
                }
            }
        }
        Ok(Self {
            width,
            height,
            channels,
            kind,
            data,
        })
    }

    pub fn filled(
        width: u32,
        height: u32,
        channels: u32,
        kind: RasterKind,
        value: f32,
    ) -> Result<Self> {
        let n = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, kind, vec![value; n])
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, u: u32, v: u32) -> &[f32] {
        let c = self.channels as usize;
        let i = (v as usize * self.width as usize + u as usize) * c;
        &self.data[i..i + c]
    }

    #[inline]
    pub fn value(&self, u: u32, v: u32) -> f32 {
        self.pixel(u, v)[0]
    }

    pub fn same_size(&self, o: &ErpImage) -> bool {
        self.width == o.width && self.height == o.height
    }

    pub fn direction<T: Real>(&self, u: T, v: T) -> Result<Vec3<T>> {
        erp_pixel_to_direction(u, v, self.width, self.height)
    }
}

/// Unit ego-frame direction of ERP pixel coordinate `(u, v)`.
///
/// Longitude spans `[-π, π)` left to right, latitude `π/2` (top) to `-π/2`.
/// Integer `(u, v)` address the pixel centre.
pub fn erp_pixel_to_direction<T: Real>(u: T, v: T, width: u32, height: u32) -> Result<Vec3<T>> {
    let (w, h) = (T::lit(width as f64), T::lit(height as f64));
    if !(u >= T::zero() && u < w && v >= T::zero() && v < h) {
        return Err(Error::domain(format!(
            "ERP pixel ({u}, {v}) outside {width}x{height}"
        )));
    }
    let half = T::lit(0.5);
    let lon = (u + half) / w * T::TAU() - T::PI();
    let lat = T::FRAC_PI_2() - (v + half) / h * T::PI();
    let (slon, clon) = lon.sin_cos();
    let (slat, clat) = lat.sin_cos();
    Ok(Vec3::new(clat * clon, clat * slon, slat))
}

/// Points with per-point semantic class ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledPointCloud<T> {
    points: Vec<Vec3<T>>,
    labels: Vec<u8>,
}

impl<T: Real> LabeledPointCloud<T> {
    pub fn new(points: Vec<Vec3<T>>, labels: Vec<u8>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::domain("point coordinates must be finite"));
        }
        Ok(Self { points, labels })
    }

    pub fn empty() -> Self {
        Self {
            points: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec3<T>, u8)> + '_ {
        self.points.iter().copied().zip(self.labels.iter().copied())
    }

    pub(crate) fn push(&mut self, p: Vec3<T>, label: u8) {
        self.points.push(p);
        self.labels.push(label);
    }

    pub fn extend(&mut self, other: &Self) {
        self.points.extend_from_slice(&other.points);
        self.labels.extend_from_slice(&other.labels);
    }

    pub fn transformed(&self, t: &RigidTransform<T>) -> Self {
        Self {
            points: self.points.iter().map(|&p| t.transform_point(p)).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Lifts every valid depth pixel on the `stride` lattice to a 3D point.
///
/// Depth is radial, so each point lies at exactly `depth` from the origin.
/// Labels come from `semantic` when given, else [`UNLABELED`].
pub fn erp_depth_to_point_cloud<T: Real>(
    depth: &ErpImage,
    semantic: Option<&ErpImage>,
    stride: u32,
) -> Result<LabeledPointCloud<T>> {
    if depth.kind != RasterKind::Depth {
        return Err(Error::shape("expected a depth raster"));
    }
    if stride == 0 {
        return Err(Error::domain("stride must be at least 1"));
    }
    if let Some(sem) = semantic {
        if sem.kind != RasterKind::Semantic {
            return Err(Error::shape("expected a semantic raster"));
        }
        if !sem.same_size(depth) {
            return Err(Error::shape(format!(
                "depth is {}x{} but semantic is {}x{}",
                depth.width, depth.height, sem.width, sem.height
            )));
        }
    }
    let mut cloud = LabeledPointCloud::empty();
    for v in (0..depth.height).step_by(stride as usize) {
        for u in (0..depth.width).step_by(stride as usize) {
            let d = depth.value(u, v);
            if d <= 0.0 {
                continue;
            }
            let dir = depth.direction(T::lit(u as f64), T::lit(v as f64))?;
            let label = semantic.map_or(UNLABELED, |s| s.value(u, v) as u8);
            cloud.push(dir * T::lit(d as f64), label);
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_centre_looks_forward() {
        let d = erp_pixel_to_direction(999.5, 499.5, 2000, 1000).unwrap();
        assert_eq!(d, Vec3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn out_of_range_pixel_is_domain_error() {
        assert!(erp_pixel_to_direction(2000.0, 0.0, 2000, 1000).is_err());
        assert!(erp_pixel_to_direction(0.0, -0.1, 2000, 1000).is_err());
    }

    #[test]
    fn all_zero_depth_is_empty() {
        let img = ErpImage::filled(8, 4, 1, RasterKind::Depth, 0.0).unwrap();
        let c = erp_depth_to_point_cloud::<f64>(&img, None, 1).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn centre_pixel_lifts_forward() {
        let mut data = vec![0.0; 9];
        data[4] = 5.0;
        let img = ErpImage::new(3, 3, 1, RasterKind::Depth, data).unwrap();
        let c = erp_depth_to_point_cloud::<f64>(&img, None, 1).unwrap();
        assert_eq!(c.len(), 1);
        assert!(c.points()[0].max_abs_diff(Vec3::new(5.0, 0.0, 0.0)) < 1e-15);
        assert_eq!(c.labels()[0], UNLABELED);
    }

    #[test]
    fn semantic_labels_are_copied_and_sizes_checked() {
        let depth = ErpImage::filled(4, 2, 1, RasterKind::Depth, 2.0).unwrap();
        let sem = ErpImage::filled(4, 2, 1, RasterKind::Semantic, 7.0).unwrap();
        let c = erp_depth_to_point_cloud::<f64>(&depth, Some(&sem), 2).unwrap();
        assert_eq!(c.len(), 2);
        assert!(c.labels().iter().all(|&l| l == 7));
        let small = ErpImage::filled(2, 2, 1, RasterKind::Semantic, 1.0).unwrap();
        assert!(matches!(
            erp_depth_to_point_cloud::<f64>(&depth, Some(&small), 1),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn depth_raster_validation() {
        assert!(ErpImage::new(1, 1, 1, RasterKind::Depth, vec![-1.0]).is_err());
        assert!(ErpImage::new(1, 1, 1, RasterKind::Depth, vec![f32::NAN]).is_err());
        assert!(ErpImage::new(2, 1, 1, RasterKind::Depth, vec![1.0]).is_err());
        assert!(ErpImage::new(1, 1, 1, RasterKind::Semantic, vec![1.5]).is_err());
    }
}
