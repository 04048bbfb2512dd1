//! Voxel-to-image reference points, multi-camera feature averaging, and
//! pose-aligned temporal fusion.
//!
//! Image sampling uses a single reference location per camera with uniform
//! weights, so a voxel's feature is the plain mean over the cameras that see
//! its centre.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{ErpImage, FisheyeCamera, RasterKind, RigidTransform};
use crate::grid::{CoordSys, GridSpec, VoxelGrid, VoxelIndex};
use crate::scalar::Real;
use crate::sketch::CandidateMask;

/// Per-camera feature raster sampled in normalized `[0, 1]²` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub camera: String,
    image: ErpImage,
}

impl FeatureImage {
    pub fn new(camera: impl Into<String>, image: ErpImage) -> Result<Self> {
        if image.kind != RasterKind::Feature {
            return Err(Error::shape("feature images need a feature raster"));
        }
        Ok(Self {
            camera: camera.into(),
            image,
        })
    }

    /// Constant-valued `width × height × channels` raster.
    pub fn constant(
        camera: impl Into<String>,
        width: u32,
        height: u32,
        channels: u32,
        value: f32,
    ) -> Result<Self> {
        Self::new(
            camera,
            ErpImage::filled(width, height, channels, RasterKind::Feature, value)?,
        )
    }

    pub fn image(&self) -> &ErpImage {
        &self.image
    }

    pub fn channels(&self) -> usize {
        self.image.channels as usize
    }

    /// Bilinear sample at normalized `(u, v)`, pixel centres at
    /// `((i + 0.5)/W, (j + 0.5)/H)`, clamped to the edge pixels.
    pub fn sample<T: Real>(&self, u: T, v: T, out: &mut [f64]) {
        let (w, h) = (self.image.width, self.image.height);
        let x = u.as_f64() * w as f64 - 0.5;
        let y = v.as_f64() * h as f64 - 0.5;
        let (x0, tx) = split_axis(x, w);
        let (y0, ty) = split_axis(y, h);
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let (a, b) = (self.image.pixel(x0, y0), self.image.pixel(x1, y0));
        let (c, d) = (self.image.pixel(x0, y1), self.image.pixel(x1, y1));
        for k in 0..out.len() {
            let top = lerp(a[k] as f64, b[k] as f64, tx);
            let bottom = lerp(c[k] as f64, d[k] as f64, tx);
            out[k] = lerp(top, bottom, ty);
        }
    }
}

/// Lower node and weight along one clamped raster axis.
fn split_axis(x: f64, n: u32) -> (u32, f64) {
    let max = (n - 1) as f64;
    let x = x.clamp(0.0, max);
    let x0 = x.floor();
    (x0 as u32, x - x0)
}

/// `a + t·(b − a)`: exact at `t = 0` and when `a == b`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + t * (b - a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint<T> {
    pub voxel: VoxelIndex,
    pub camera: String,
    /// `(u / W, v / H)`, inside `[0, 1)²`.
    pub uv: (T, T),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelHits<T> {
    pub voxel: VoxelIndex,
    /// Sorted by camera name.
    pub refs: Vec<ReferencePoint<T>>,
}

impl<T> VoxelHits<T> {
    /// A voxel no camera sees; it receives no image feature.
    pub fn is_unhit(&self) -> bool {
        self.refs.is_empty()
    }
}

/// Reference points of every candidate voxel across the rig.
#[derive(Debug, Clone, PartialEq)]
pub struct HitSet<T> {
    spec: GridSpec<T>,
    cameras: Vec<String>,
    voxels: Vec<VoxelHits<T>>,
}

impl<T: Real> HitSet<T> {
    pub fn spec(&self) -> &GridSpec<T> {
        &self.spec
    }

    /// Rig camera names in sorted order.
    pub fn cameras(&self) -> &[String] {
        &self.cameras
    }

    pub fn voxels(&self) -> &[VoxelHits<T>] {
        &self.voxels
    }

    /// Candidate voxels that no camera sees.
    pub fn unhit(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        self.voxels.iter().filter(|v| v.is_unhit()).map(|v| v.voxel)
    }

    pub fn get(&self, voxel: VoxelIndex) -> Option<&VoxelHits<T>> {
        let flat = self.spec.flat_index(voxel);
        self.voxels
            .binary_search_by_key(&flat, |v| self.spec.flat_index(v.voxel))
            .ok()
            .map(|i| &self.voxels[i])
    }
}

/// Projects every candidate voxel centre into every camera.
///
/// Misses and projections landing outside a camera's raster are dropped.
/// References are ordered by camera name, so the result does not depend on
/// rig order.
pub fn build_hit_set<T: Real>(
    mask: &CandidateMask<T>,
    rig: &[FisheyeCamera<T>],
) -> Result<HitSet<T>> {
    if rig.is_empty() {
        return Err(Error::domain("camera rig is empty"));
    }
    let mut sorted: Vec<&FisheyeCamera<T>> = rig.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    if sorted.windows(2).any(|w| w[0].name == w[1].name) {
        return Err(Error::domain("camera names must be unique"));
    }
    let spec = *mask.spec();
    let occupied: Vec<usize> = mask.occupied().collect();
    let voxels = occupied
        .par_iter()
        .map(|&flat| {
            let voxel = spec.unflatten(flat);
            let centre = spec
                .index_to_center(voxel)
                .expect("occupied voxel is in range");
            let refs = sorted
                .iter()
                .filter_map(|cam| {
                    let (u, v) = cam.project(centre)?;
                    if !cam.in_raster(u, v) {
                        return None;
                    }
                    let uv = (u / T::lit(cam.width as f64), v / T::lit(cam.height as f64));
                    Some(ReferencePoint {
                        voxel,
                        camera: cam.name.clone(),
                        uv,
                    })
                })
                .collect();
            VoxelHits { voxel, refs }
        })
        .collect();
    Ok(HitSet {
        spec,
        cameras: sorted.iter().map(|c| c.name.clone()).collect(),
        voxels,
    })
}

/// Averages each hit voxel's bilinear feature samples over its cameras.
/// Un-hit voxels and non-candidates stay zero.
pub fn color_voxels<T: Real>(hits: &HitSet<T>, features: &[FeatureImage]) -> Result<VoxelGrid<T>> {
    let by_name: BTreeMap<&str, &FeatureImage> =
        features.iter().map(|f| (f.camera.as_str(), f)).collect();
    let mut channels = None;
    for cam in hits.cameras() {
        let f = by_name
            .get(cam.as_str())
            .ok_or_else(|| Error::domain(format!("no feature image for camera `{cam}`")))?;
        match channels {
            None => channels = Some(f.channels()),
            Some(d) if d != f.channels() => {
                return Err(Error::shape(format!(
                    "camera `{cam}` has {} channels, expected {d}",
                    f.channels()
                )))
            }
            _ => {}
        }
    }
    let d = channels.expect("hit sets always name at least one camera");
    let spec = *hits.spec();
    let mut grid = VoxelGrid::zero_features(spec, d)?;
    let colored: Vec<(usize, Vec<f32>)> = hits
        .voxels()
        .par_iter()
        .filter(|v| !v.is_unhit())
        .map(|v| {
            let mut acc = vec![0.0f64; d];
            let mut sample = vec![0.0f64; d];
            for r in &v.refs {
                by_name[r.camera.as_str()].sample(r.uv.0, r.uv.1, &mut sample);
                for (a, s) in acc.iter_mut().zip(&sample) {
                    *a += s;
                }
            }
            let n = v.refs.len() as f64;
            (
                spec.flat_index(v.voxel),
                acc.iter().map(|a| (a / n) as f32).collect(),
            )
        })
        .collect();
    let data = grid.features_mut()?;
    for (flat, f) in colored {
        data[flat * d..(flat + 1) * d].copy_from_slice(&f);
    }
    Ok(grid)
}

/// Fractional index coordinates within this distance of an integer are
/// treated as lattice nodes.
const NODE_SNAP: f64 = 1e-6;

/// Resamples a historical feature grid into the current ego frame.
///
/// Each current voxel centre `p` maps to `T_hist⁻¹·T_curr·p`, which is
/// trilinearly interpolated in fractional index space (θ wraps). Samples
/// outside the grid's r or z range (any axis for cuboid grids) are zero.
pub fn align_history<T: Real>(
    hist: &VoxelGrid<T>,
    t_hist: &RigidTransform<T>,
    t_curr: &RigidTransform<T>,
    spec: &GridSpec<T>,
) -> Result<VoxelGrid<T>> {
    if !hist.spec().same_lattice(spec) {
        return Err(Error::shape(
            "history grid spec differs from the target spec",
        ));
    }
    let src = hist.features()?;
    let d = hist.channels();
    let relative = t_hist.inverse().compose(t_curr);
    if t_hist == t_curr || relative.is_identity() {
        return Ok(hist.clone());
    }
    let spec = *hist.spec();
    let mut out = vec![0.0f32; src.len()];
    out.par_chunks_mut(d).enumerate().for_each(|(flat, dst)| {
        let centre = spec.native_to_cartesian(spec.center_native(spec.unflatten(flat)));
        let p = relative.transform_point(centre);
        if let Some(corners) = trilinear_corners(&spec, p) {
            let mut acc = vec![0.0f64; d];
            accumulate_trilinear(&spec, src, d, &corners, &mut acc);
            for (o, a) in dst.iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        }
    });
    VoxelGrid::from_features(spec, d, out)
}

/// Lower corner and weights for trilinear sampling at `p`, or `None` when
/// `p` is outside the sampled range.
fn trilinear_corners<T: Real>(
    spec: &GridSpec<T>,
    p: crate::geom::Vec3<T>,
) -> Option<[(usize, usize, f64); 3]> {
    let native = spec.native_coords(p);
    let ranges = spec.ranges();
    let wraps = |k: usize| spec.coord_sys() == CoordSys::Cylindrical && k == 1;
    for k in 0..3 {
        if !wraps(k) && !(native[k] >= ranges[k].0 && native[k] < ranges[k].1) {
            return None;
        }
    }
    let frac = spec.fractional_index(p);
    let dims = spec.dims();
    let mut corners = [(0usize, 0usize, 0.0f64); 3];
    for k in 0..3 {
        let mut f = frac[k].as_f64();
        let r = f.round();
        if (f - r).abs() < NODE_SNAP {
            f = r;
        }
        let lo = f.floor();
        let t = f - lo;
        let n = dims[k] as i64;
        let lo = lo as i64;
        corners[k] = if wraps(k) {
            (
                lo.rem_euclid(n) as usize,
                (lo + 1).rem_euclid(n) as usize,
                t,
            )
        } else {
            let c0 = lo.clamp(0, n - 1) as usize;
            let c1 = (lo + 1).clamp(0, n - 1) as usize;
            (c0, c1, if lo < 0 || lo >= n - 1 { 0.0 } else { t })
        };
    }
    Some(corners)
}

fn accumulate_trilinear<T: Real>(
    spec: &GridSpec<T>,
    src: &[f32],
    d: usize,
    c: &[(usize, usize, f64); 3],
    acc: &mut [f64],
) {
    let at = |i0: usize, i1: usize, i2: usize, ch: usize| {
        src[spec.flat_index([i0, i1, i2]) * d + ch] as f64
    };
    let (r, t, z) = (c[0], c[1], c[2]);
    for (ch, a) in acc.iter_mut().enumerate() {
        let along_z = |i0, i1| lerp(at(i0, i1, z.0, ch), at(i0, i1, z.1, ch), z.2);
        let inner = lerp(along_z(r.0, t.0), along_z(r.0, t.1), t.2);
        let outer = lerp(along_z(r.1, t.0), along_z(r.1, t.1), t.2);
        *a = lerp(inner, outer, r.2);
    }
}

/// `(V_curr + Σ aligned_i) / (N + 1)` elementwise.
///
/// Zero-filled samples from alignment are averaged in as-is; the divisor is
/// always `N + 1`.
pub fn fuse_temporal<T: Real>(
    curr: &VoxelGrid<T>,
    aligned: &[VoxelGrid<T>],
) -> Result<VoxelGrid<T>> {
    let base = curr.features()?;
    let mut inputs = Vec::with_capacity(aligned.len());
    for a in aligned {
        curr.check_compatible(a)?;
        inputs.push(a.features()?);
    }
    let denom = (aligned.len() + 1) as f64;
    let mut out = vec![0.0f32; base.len()];
    out.par_iter_mut().enumerate().for_each(|(i, o)| {
        let mut s = base[i] as f64;
        for a in &inputs {
            s += a[i] as f64;
        }
        *o = (s / denom) as f32;
    });
    VoxelGrid::from_features(*curr.spec(), curr.channels(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::grid::Payload;
    use std::f64::consts::PI;

    fn spec() -> GridSpec<f64> {
        GridSpec::cylindrical([8, 16, 4], (0.0, 8.0), (-2.0, 2.0)).unwrap()
    }

    fn mask_with(spec: GridSpec<f64>, voxels: &[VoxelIndex]) -> CandidateMask<f64> {
        let mut bits = vec![0u8; spec.voxel_count()];
        for &v in voxels {
            bits[spec.flat_index(v)] = 1;
        }
        CandidateMask::from_grid(VoxelGrid::new(spec, Payload::Occupancy(bits)).unwrap()).unwrap()
    }

    fn forward_cam(name: &str) -> FisheyeCamera<f64> {
        let pose = crate::geom::horizontal_camera_pose(0.0, Vec3::zero());
        FisheyeCamera::new(name, 64, 64, 20.0, 32.0, 32.0, PI, pose).unwrap()
    }

    #[test]
    fn voxel_behind_camera_is_flagged() {
        let s = spec();
        // θ bin 0 is centred near −π, i.e. behind a forward-looking camera.
        let m = mask_with(s, &[[3, 0, 1]]);
        let hits = build_hit_set(&m, &[forward_cam("front")]).unwrap();
        assert_eq!(hits.unhit().collect::<Vec<_>>(), vec![[3, 0, 1]]);
    }

    #[test]
    fn on_axis_voxel_hits_principal_point() {
        let s = GridSpec::cylindrical([4, 2, 1], (0.0, 8.0), (-1.0, 1.0)).unwrap();
        // θ bin 1 is centred at +π/2; rotate the camera to look there.
        let pose = crate::geom::horizontal_camera_pose(PI / 2.0, Vec3::zero());
        let cam = FisheyeCamera::new("left", 64, 48, 20.0, 32.0, 24.0, PI, pose).unwrap();
        let hits = build_hit_set(&mask_with(s, &[[2, 1, 0]]), &[cam]).unwrap();
        let r = &hits.voxels()[0].refs[0];
        assert!((r.uv.0 - 0.5).abs() < 1e-12 && (r.uv.1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_rig_and_duplicates_rejected() {
        let m = mask_with(spec(), &[[1, 1, 1]]);
        assert!(build_hit_set::<f64>(&m, &[]).is_err());
        assert!(build_hit_set(&m, &[forward_cam("a"), forward_cam("a")]).is_err());
    }

    #[test]
    fn sampling_at_pixel_centre_returns_pixel() {
        let data: Vec<f32> = (0..12).map(|i| i as f32).collect();
        let img = ErpImage::new(4, 3, 1, RasterKind::Feature, data).unwrap();
        let f = FeatureImage::new("c", img).unwrap();
        let mut out = [0.0];
        f.sample(2.5 / 4.0, 1.5 / 3.0, &mut out);
        assert_eq!(out[0], 6.0);
        f.sample(3.0 / 4.0, 1.5 / 3.0, &mut out);
        assert_eq!(out[0], 6.5);
    }

    #[test]
    fn two_constant_cameras_average() {
        let s = spec();
        let m = mask_with(s, &[[4, 8, 2], [4, 9, 1]]);
        let hits = build_hit_set(&m, &[forward_cam("a"), forward_cam("b")]).unwrap();
        let feats = [
            FeatureImage::constant("a", 64, 64, 2, 1.0).unwrap(),
            FeatureImage::constant("b", 64, 64, 2, 4.0).unwrap(),
        ];
        let g = color_voxels(&hits, &feats).unwrap();
        assert_eq!(g.feature(s.flat_index([4, 8, 2])).unwrap(), &[2.5, 2.5]);
        assert_eq!(g.feature(s.flat_index([0, 0, 0])).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn color_rejects_missing_or_mismatched_features() {
        let m = mask_with(spec(), &[[4, 8, 2]]);
        let hits = build_hit_set(&m, &[forward_cam("a"), forward_cam("b")]).unwrap();
        let only_a = [FeatureImage::constant("a", 64, 64, 2, 1.0).unwrap()];
        assert!(matches!(
            color_voxels(&hits, &only_a),
            Err(Error::Domain(_))
        ));
        let mismatched = [
            FeatureImage::constant("a", 64, 64, 2, 1.0).unwrap(),
            FeatureImage::constant("b", 64, 64, 3, 1.0).unwrap(),
        ];
        assert!(matches!(
            color_voxels(&hits, &mismatched),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn fuse_examples() {
        let s = spec();
        let c = VoxelGrid::from_features(s, 1, vec![2.0; s.voxel_count()]).unwrap();
        assert_eq!(fuse_temporal(&c, &[]).unwrap(), c);
        assert_eq!(fuse_temporal(&c, std::slice::from_ref(&c)).unwrap(), c);
        let z = VoxelGrid::zero_features(s, 1).unwrap();
        let f = fuse_temporal(&c, &[z.clone(), z.clone(), z]).unwrap();
        assert!(f.features().unwrap().iter().all(|&x| x == 0.5));
        let other = VoxelGrid::zero_features(GridSpec::default_cylindrical(), 1).unwrap();
        assert!(fuse_temporal(&c, &[other]).is_err());
    }

    #[test]
    fn identity_alignment_is_exact() {
        let s = spec();
        let data: Vec<f32> = (0..s.voxel_count()).map(|i| (i as f32).sin()).collect();
        let g = VoxelGrid::from_features(s, 1, data).unwrap();
        let t = RigidTransform::from_yaw(0.3, Vec3::new(1.0, 2.0, 0.5));
        assert_eq!(align_history(&g, &t, &t, &s).unwrap(), g);
    }

    #[test]
    fn z_shift_moves_one_layer() {
        let s = spec();
        let data: Vec<f32> = (0..s.voxel_count()).map(|i| i as f32).collect();
        let g = VoxelGrid::from_features(s, 1, data).unwrap();
        let t_curr = RigidTransform::from_translation(Vec3::new(0.0, 0.0, 1.0));
        let out = align_history(&g, &RigidTransform::identity(), &t_curr, &s).unwrap();
        for flat in 0..s.voxel_count() {
            let [r, t, z] = s.unflatten(flat);
            let got = out.feature(flat).unwrap()[0];
            if z + 1 < 4 {
                assert_eq!(got, g.feature(s.flat_index([r, t, z + 1])).unwrap()[0]);
            } else {
                assert_eq!(got, 0.0);
            }
        }
    }
}
