//! Analytic synthetic scenes: labeled primitives with closed-form ray
//! intersection, ERP rendering, virtual lidar sampling and voxel ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{
    erp_pixel_to_direction, horizontal_camera_pose, ErpImage, FisheyeCamera, LabeledPointCloud,
    RasterKind, RigidTransform, Vec3,
};
use crate::grid::{CoordSys, GridSpec, LabelSet, VoxelGrid, VoxelIndex, FREE};
use crate::metrics::QueryRay;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape<T> {
    /// Points with `normal · p ≤ offset`; `normal` is unit length.
    HalfSpace {
        normal: Vec3<T>,
        offset: T,
    },
    /// Axis-aligned box, closed.
    Box {
        min: Vec3<T>,
        max: Vec3<T>,
    },
    /// Vertical cylinder with flat caps at `z.0` and `z.1`.
    Cylinder {
        center: (T, T),
        radius: T,
        z: (T, T),
    },
    Sphere {
        center: Vec3<T>,
        radius: T,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePrimitive<T> {
    shape: Shape<T>,
    label: u8,
}

impl<T: Real> ScenePrimitive<T> {
    pub fn new(shape: Shape<T>, label: u8) -> Result<Self> {
        if label == FREE {
            return Err(Error::domain("primitives cannot carry the free label"));
        }
        let finite = |v: Vec3<T>| v.is_finite();
        let shape = match shape {
            Shape::HalfSpace { normal, offset } => {
                let normal = normal
                    .normalized()
                    .ok_or_else(|| Error::domain("half-space normal must be non-zero"))?;
                if !offset.is_finite() {
                    return Err(Error::domain("half-space offset must be finite"));
                }
                Shape::HalfSpace { normal, offset }
            }
            Shape::Box { min, max } => {
                if !(finite(min) && finite(max) && min.x < max.x && min.y < max.y && min.z < max.z)
                {
                    return Err(Error::domain("box extents must be finite and positive"));
                }
                shape
            }
            Shape::Cylinder { center, radius, z } => {
                if !(center.0.is_finite()
                    && center.1.is_finite()
                    && radius > T::zero()
                    && z.0 < z.1)
                    || !(radius.is_finite() && z.0.is_finite() && z.1.is_finite())
                {
                    return Err(Error::domain(
                        "cylinder radius and height must be finite and positive",
                    ));
                }
                shape
            }
            Shape::Sphere { center, radius } => {
                if !(finite(center) && radius > T::zero() && radius.is_finite()) {
                    return Err(Error::domain("sphere radius must be finite and positive"));
                }
                shape
            }
        };
        Ok(Self { shape, label })
    }

    /// Ground plane `z ≤ height`. Panics on the free label.
    pub fn ground(height: T, label: u8) -> Self {
        let normal = Vec3::new(T::zero(), T::zero(), T::one());
        Self::new(
            Shape::HalfSpace {
                normal,
                offset: height,
            },
            label,
        )
        .expect("ground label must not be free")
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    /// Closed-set membership.
    pub fn contains(&self, p: Vec3<T>) -> bool {
        match self.shape {
            Shape::HalfSpace { normal, offset } => normal.dot(p) <= offset,
            Shape::Box { min, max } => {
                p.x >= min.x
                    && p.x <= max.x
                    && p.y >= min.y
                    && p.y <= max.y
                    && p.z >= min.z
                    && p.z <= max.z
            }
            Shape::Cylinder { center, radius, z } => {
                let (dx, dy) = (p.x - center.0, p.y - center.1);
                dx * dx + dy * dy <= radius * radius && p.z >= z.0 && p.z <= z.1
            }
            Shape::Sphere { center, radius } => {
                let d = p - center;
                d.dot(d) <= radius * radius
            }
        }
    }

    /// Exact signed distance to the surface, negative inside.
    pub fn signed_distance(&self, p: Vec3<T>) -> T {
        let zero = T::zero();
        match self.shape {
            Shape::HalfSpace { normal, offset } => normal.dot(p) - offset,
            Shape::Box { min, max } => {
                let half = T::lit(0.5);
                let c = (min + max) * half;
                let h = (max - min) * half;
                let q = Vec3::new(
                    (p.x - c.x).abs() - h.x,
                    (p.y - c.y).abs() - h.y,
                    (p.z - c.z).abs() - h.z,
                );
                let outside = Vec3::new(q.x.max(zero), q.y.max(zero), q.z.max(zero)).norm();
                outside + q.x.max(q.y).max(q.z).min(zero)
            }
            Shape::Cylinder { center, radius, z } => {
                let half = T::lit(0.5);
                let (dx, dy) = (p.x - center.0, p.y - center.1);
                let a = (dx * dx + dy * dy).sqrt() - radius;
                let b = (p.z - (z.0 + z.1) * half).abs() - (z.1 - z.0) * half;
                let outside = (a.max(zero).powi(2) + b.max(zero).powi(2)).sqrt();
                outside + a.max(b).min(zero)
            }
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
        }
    }

    /// Parameter interval `[t0, t1]` of the whole line `o + t·d` inside the
    /// primitive; bounds may be infinite.
    fn line_interval(&self, o: Vec3<T>, d: Vec3<T>) -> Option<(T, T)> {
        let (inf, zero) = (T::infinity(), T::zero());
        match self.shape {
            Shape::HalfSpace { normal, offset } => {
                let s = normal.dot(o) - offset;
                let k = normal.dot(d);
                if k == zero {
                    (s <= zero).then_some((-inf, inf))
                } else if k > zero {
                    Some((-inf, -s / k))
                } else {
                    Some((-s / k, inf))
                }
            }
            Shape::Box { min, max } => {
                let mut lo = -inf;
                let mut hi = inf;
                for a in 0..3 {
                    let (s, e) = slab(o[a], d[a], min[a], max[a])?;
                    lo = lo.max(s);
                    hi = hi.min(e);
                }
                (lo <= hi).then_some((lo, hi))
            }
            Shape::Cylinder { center, radius, z } => {
                let (ox, oy) = (o.x - center.0, o.y - center.1);
                let a = d.x * d.x + d.y * d.y;
                let (lo, hi) = if a == zero {
                    if ox * ox + oy * oy > radius * radius {
                        return None;
                    }
                    (-inf, inf)
                } else {
                    quadratic_interval(a, ox * d.x + oy * d.y, ox * ox + oy * oy - radius * radius)?
                };
                let (s, e) = slab(o.z, d.z, z.0, z.1)?;
                let (lo, hi) = (lo.max(s), hi.min(e));
                (lo <= hi).then_some((lo, hi))
            }
            Shape::Sphere { center, radius } => {
                let oc = o - center;
                quadratic_interval(d.dot(d), oc.dot(d), oc.dot(oc) - radius * radius)
            }
        }
    }

    /// Nearest non-negative distance along a unit-direction ray; 0 when the
    /// origin is inside.
    pub fn intersect(&self, ray: &QueryRay<T>) -> Option<T> {
        let (lo, hi) = self.line_interval(ray.origin, ray.direction())?;
        (hi >= T::zero()).then(|| lo.max(T::zero()))
    }

    /// Axis-aligned bounds, `None` for unbounded shapes.
    fn bounds(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        match self.shape {
            Shape::HalfSpace { .. } => None,
            Shape::Box { min, max } => Some((min, max)),
            Shape::Cylinder { center, radius, z } => Some((
                Vec3::new(center.0 - radius, center.1 - radius, z.0),
                Vec3::new(center.0 + radius, center.1 + radius, z.1),
            )),
            Shape::Sphere { center, radius } => {
                let r = Vec3::new(radius, radius, radius);
                Some((center - r, center + r))
            }
        }
    }
}

/// `[t0, t1]` where `o + t·d` lies in `[lo, hi]` along one axis.
fn slab<T: Real>(o: T, d: T, lo: T, hi: T) -> Option<(T, T)> {
    let inf = T::infinity();
    if d == T::zero() {
        return (o >= lo && o <= hi).then_some((-inf, inf));
    }
    let (a, b) = ((lo - o) / d, (hi - o) / d);
    Some((a.min(b), a.max(b)))
}

/// Roots of `a t² + 2 b t + c ≤ 0` for `a > 0`.
fn quadratic_interval<T: Real>(a: T, b: T, c: T) -> Option<(T, T)> {
    let disc = b * b - a * c;
    if disc < T::zero() {
        return None;
    }
    let s = disc.sqrt();
    // Numerically stable pairing of the two roots.
    let q = if b >= T::zero() { -(b + s) } else { -b + s };
    if q == T::zero() {
        return Some((T::zero(), T::zero()));
    }
    let (r0, r1) = (q / a, c / q);
    Some((r0.min(r1), r0.max(r1)))
}

/// Ordered list of primitives. Earlier primitives win ties.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene<T> {
    pub primitives: Vec<ScenePrimitive<T>>,
}

/// Nearest surface along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneHit<T> {
    pub distance: T,
    pub label: u8,
    pub primitive: usize,
}

impl<T: Real> Scene<T> {
    pub fn new(primitives: Vec<ScenePrimitive<T>>) -> Self {
        Self { primitives }
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Label of the first primitive containing `p`, if any.
    pub fn label_at(&self, p: Vec3<T>) -> Option<u8> {
        self.primitives
            .iter()
            .find(|q| q.contains(p))
            .map(|q| q.label)
    }

    /// Signed distance to the union of all primitives.
    pub fn signed_distance(&self, p: Vec3<T>) -> T {
        self.primitives
            .iter()
            .map(|q| q.signed_distance(p))
            .fold(T::infinity(), T::min)
    }

    pub fn largest_label(&self) -> u8 {
        self.primitives
            .iter()
            .map(|p| p.label)
            .max()
            .unwrap_or(FREE)
    }
}

/// Closed-form nearest intersection over all primitives within `max_dist`.
pub fn ray_scene_intersect<T: Real>(
    ray: &QueryRay<T>,
    scene: &Scene<T>,
    max_dist: T,
) -> Option<SceneHit<T>> {
    let mut best: Option<SceneHit<T>> = None;
    for (i, p) in scene.primitives.iter().enumerate() {
        if let Some(t) = p.intersect(ray) {
            if t <= max_dist && best.is_none_or(|b| t < b.distance) {
                best = Some(SceneHit {
                    distance: t,
                    label: p.label,
                    primitive: i,
                });
            }
        }
    }
    best
}

/// Renders radial depth (0 where nothing is hit) and semantic labels (0
/// where nothing is hit) of an ERP camera with pose `pose` (ERP frame to
/// world).
pub fn render_erp_depth<T: Real>(
    scene: &Scene<T>,
    width: u32,
    height: u32,
    pose: &RigidTransform<T>,
) -> Result<(ErpImage, ErpImage)> {
    if width == 0 || height == 0 {
        return Err(Error::domain("ERP size must be at least 1x1"));
    }
    let origin = pose.translation();
    let rows: Vec<Vec<(f32, f32)>> = (0..height)
        .into_par_iter()
        .map(|v| {
            (0..width)
                .map(|u| {
                    let dir =
                        erp_pixel_to_direction(T::lit(u as f64), T::lit(v as f64), width, height)
                            .expect("pixel inside raster");
                    let ray =
                        QueryRay::new(origin, pose.transform_vector(dir)).expect("unit direction");
                    match ray_scene_intersect(&ray, scene, T::infinity()) {
                        Some(h) => (h.distance.as_f32(), h.label as f32),
                        None => (0.0, FREE as f32),
                    }
                })
                .collect()
        })
        .collect();
    let (depth, sem): (Vec<f32>, Vec<f32>) = rows.into_iter().flatten().unzip();
    Ok((
        ErpImage::new(width, height, 1, RasterKind::Depth, depth)?,
        ErpImage::new(width, height, 1, RasterKind::Semantic, sem)?,
    ))
}

/// Cartesian bounding box of a voxel.
fn voxel_bounds<T: Real>(spec: &GridSpec<T>, i: VoxelIndex) -> (Vec3<T>, Vec3<T>) {
    let ranges = spec.ranges();
    let edge = |a: usize| {
        let w = spec.bin_width(a);
        let lo = ranges[a].0 + w * T::lit(i[a] as f64);
        (lo, lo + w)
    };
    let (a0, a1, a2) = (edge(0), edge(1), edge(2));
    match spec.coord_sys() {
        CoordSys::Cuboid => (Vec3::new(a0.0, a1.0, a2.0), Vec3::new(a0.1, a1.1, a2.1)),
        CoordSys::Cylindrical => {
            let mut angles = vec![a1.0, a1.1];
            let quarter = T::FRAC_PI_2();
            let mut k = (a1.0 / quarter).ceil();
            while k * quarter < a1.1 {
                angles.push(k * quarter);
                k += T::one();
            }
            let mut lo = Vec3::new(T::infinity(), T::infinity(), a2.0);
            let mut hi = Vec3::new(T::neg_infinity(), T::neg_infinity(), a2.1);
            for th in angles {
                let (s, c) = th.sin_cos();
                for r in [a0.0, a0.1] {
                    let (x, y) = (r * c, r * s);
                    lo.x = lo.x.min(x);
                    lo.y = lo.y.min(y);
                    hi.x = hi.x.max(x);
                    hi.y = hi.y.max(y);
                }
            }
            (lo, hi)
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Coverage {
    Outside,
    Inside,
    Partial,
}

/// Conservative relation between a voxel's bounding box and a primitive.
fn coverage<T: Real>(p: &ScenePrimitive<T>, lo: Vec3<T>, hi: Vec3<T>) -> Coverage {
    let corners = (0..8).map(|k| {
        Vec3::new(
            if k & 1 == 0 { lo.x } else { hi.x },
            if k & 2 == 0 { lo.y } else { hi.y },
            if k & 4 == 0 { lo.z } else { hi.z },
        )
    });
    match p.shape {
        Shape::HalfSpace { .. } | Shape::Box { .. } if corners.clone().all(|c| p.contains(c)) => {
            Coverage::Inside
        }
        Shape::HalfSpace { .. } => {
            if corners.clone().all(|c| p.signed_distance(c) > T::zero()) {
                Coverage::Outside
            } else {
                Coverage::Partial
            }
        }
        _ => {
            let (a, b) = p.bounds().expect("bounded shape");
            if (0..3).all(|k| lo[k] <= b[k] && a[k] <= hi[k]) {
                Coverage::Partial
            } else {
                Coverage::Outside
            }
        }
    }
}

/// Labels every voxel from `n³` stratified samples at sub-bin centres in
/// native coordinates. A sample takes the label of the first primitive
/// containing it. A voxel takes the most common label among samples inside
/// some primitive (smallest id on ties) and is free when no sample is inside.
pub fn analytic_voxel_gt<T: Real>(
    scene: &Scene<T>,
    spec: &GridSpec<T>,
    n: usize,
) -> Result<VoxelGrid<T>> {
    if n == 0 {
        return Err(Error::domain("supersampling factor must be at least 1"));
    }
    let num_labels = scene.largest_label() as usize + 1;
    let widths = [spec.bin_width(0), spec.bin_width(1), spec.bin_width(2)];
    let ranges = spec.ranges();
    let inv_n = T::one() / T::lit(n as f64);
    let half = T::lit(0.5);
    let labels: Vec<u8> = (0..spec.voxel_count())
        .into_par_iter()
        .map_init(
            || (vec![0usize; num_labels], Vec::new()),
            |(votes, candidates), flat| {
                let idx = spec.unflatten(flat);
                let (lo, hi) = voxel_bounds(spec, idx);
                candidates.clear();
                for p in &scene.primitives {
                    match coverage(p, lo, hi) {
                        Coverage::Outside => {}
                        // Every sample is inside `p`; later primitives never win.
                        Coverage::Inside if candidates.is_empty() => return p.label,
                        Coverage::Inside => {
                            candidates.push(*p);
                            break;
                        }
                        Coverage::Partial => candidates.push(*p),
                    }
                }
                if candidates.is_empty() {
                    return FREE;
                }
                votes.iter_mut().for_each(|v| *v = 0);
                let coord = |a: usize, k: usize| {
                    ranges[a].0
                        + widths[a] * (T::lit(idx[a] as f64) + (T::lit(k as f64) + half) * inv_n)
                };
                for a in 0..n {
                    let c0 = coord(0, a);
                    for b in 0..n {
                        let c1 = coord(1, b);
                        for c in 0..n {
                            let p = spec.native_to_cartesian([c0, c1, coord(2, c)]);
                            if let Some(q) = candidates.iter().find(|q| q.contains(p)) {
                                votes[q.label as usize] += 1;
                            }
                        }
                    }
                }
                let mut best = FREE;
                for (l, &v) in votes.iter().enumerate().skip(1) {
                    if v > votes[best as usize] {
                        best = l as u8;
                    }
                }
                best
            },
        )
        .collect();
    VoxelGrid::from_labels(*spec, labels)
}

/// Virtual spinning lidar: an azimuth × elevation fan of rays from `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarFan<T> {
    pub origin: Vec3<T>,
    pub azimuths: usize,
    pub elevations: usize,
    /// Closed elevation interval in radians, sampled at both ends.
    pub elevation_range: (T, T),
    pub max_range: T,
}

impl<T: Real> LidarFan<T> {
    /// 2048 × 128 beams over [−0.6, 0.25] rad, 40 m range.
    pub fn dense(origin: Vec3<T>) -> Self {
        Self {
            origin,
            azimuths: 2048,
            elevations: 128,
            elevation_range: (T::lit(-0.6), T::lit(0.25)),
            max_range: T::lit(40.0),
        }
    }
}

/// One fan per camera, placed at each camera centre.
pub fn rig_fans<T: Real>(rig: &[FisheyeCamera<T>], template: &LidarFan<T>) -> Vec<LidarFan<T>> {
    rig.iter()
        .map(|c| LidarFan {
            origin: c.position(),
            ..*template
        })
        .collect()
}

/// Samples hit points of every fan. `density` scales both beam counts.
///
/// Output order is fan, elevation, azimuth, so results are identical across
/// thread counts.
pub fn sample_scene_point_cloud<T: Real>(
    scene: &Scene<T>,
    fans: &[LidarFan<T>],
    density: T,
) -> Result<LabeledPointCloud<T>> {
    if !(density > T::zero() && density.is_finite()) {
        return Err(Error::domain("density must be positive"));
    }
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for fan in fans {
        let scale = |n: usize| {
            (T::lit(n as f64) * density)
                .ceil()
                .to_usize()
                .unwrap_or(1)
                .max(1)
        };
        let (na, ne) = (scale(fan.azimuths), scale(fan.elevations));
        let (lo, hi) = fan.elevation_range;
        let d_el = if ne > 1 {
            (hi - lo) / T::lit((ne - 1) as f64)
        } else {
            T::zero()
        };
        let d_az = T::TAU() / T::lit(na as f64);
        let hits: Vec<Option<(Vec3<T>, u8)>> = (0..ne * na)
            .into_par_iter()
            .map(|k| {
                let (j, i) = (k / na, k % na);
                let el = if ne > 1 {
                    lo + d_el * T::lit(j as f64)
                } else {
                    (lo + hi) * T::lit(0.5)
                };
                let az = -T::PI() + d_az * T::lit(i as f64);
                let (se, ce) = el.sin_cos();
                let (sa, ca) = az.sin_cos();
                let ray = QueryRay::new(fan.origin, Vec3::new(ce * ca, ce * sa, se)).ok()?;
                let h = ray_scene_intersect(&ray, scene, fan.max_range)?;
                (h.distance > T::zero()).then(|| (ray.at(h.distance), h.label))
            })
            .collect();
        for (p, l) in hits.into_iter().flatten() {
            points.push(p);
            labels.push(l);
        }
    }
    LabeledPointCloud::new(points, labels)
}

/// Six horizontal 640×640 equidistant fisheye cameras with a 190° field of
/// view: front, rear and four diagonals at ±60° and ±120°.
pub fn default_rig<T: Real>() -> Vec<FisheyeCamera<T>> {
    let deg = |d: f64| T::lit(d.to_radians());
    let specs: [(&str, f64, [f64; 3]); 6] = [
        ("front", 0.0, [2.0, 0.0, -0.9]),
        ("front_left", 60.0, [1.2, 0.95, -0.8]),
        ("rear_left", 120.0, [-1.2, 0.95, -0.8]),
        ("rear", 180.0, [-2.2, 0.0, -0.9]),
        ("rear_right", -120.0, [-1.2, -0.95, -0.8]),
        ("front_right", -60.0, [1.2, -0.95, -0.8]),
    ];
    specs
        .iter()
        .map(|&(name, yaw, pos)| {
            FisheyeCamera::new(
                name,
                640,
                640,
                T::lit(190.0),
                T::lit(320.0),
                T::lit(320.0),
                deg(190.0),
                horizontal_camera_pose(deg(yaw), Vec3::from_f64(pos)),
            )
            .expect("valid default camera")
        })
        .collect()
}

/// Height of the demo ground plane below the ego origin.
pub const DEMO_GROUND_Z: f64 = -1.7;

/// Street scene with a road surface, kerbs, buildings, parked vehicles,
/// poles, pedestrians and trees. Layout varies with `seed`.
pub fn demo_scene<T: Real>(seed: u64) -> Scene<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DEMO_GROUND_Z;
    let mut prims: Vec<ScenePrimitive<f64>> = Vec::new();
    let mut push = |shape: Shape<f64>, label: u8| {
        prims.push(ScenePrimitive::new(shape, label).expect("demo primitive is valid"));
    };
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);

    let half_width: f64 = rng.gen_range(5.0..7.0);
    let kerb = 0.15;
    push(
        Shape::HalfSpace {
            normal: v(0.0, 0.0, 1.0),
            offset: g,
        },
        LabelSet::ROAD,
    );
    for side in [-1.0f64, 1.0] {
        let inner = side * half_width;
        let outer = side * (half_width + 3.0);
        push(
            Shape::Box {
                min: v(-40.0, inner.min(outer), g),
                max: v(40.0, inner.max(outer), g + kerb),
            },
            LabelSet::SIDEWALK,
        );
        // Building frontage broken into blocks.
        let mut x: f64 = -30.0;
        while x < 30.0 {
            let len = rng.gen_range(6.0..14.0);
            let depth = rng.gen_range(4.0..8.0);
            let height = rng.gen_range(4.0..9.0);
            let y0 = side * (half_width + 3.5);
            let y1 = side * (half_width + 3.5 + depth);
            push(
                Shape::Box {
                    min: v(x, y0.min(y1), g),
                    max: v(x + len, y0.max(y1), g + height),
                },
                LabelSet::BUILDING,
            );
            x += len + rng.gen_range(1.0..4.0);
        }
        // Poles and trees along the kerb.
        let mut x: f64 = -24.0 + rng.gen_range(0.0..4.0);
        while x < 24.0 {
            let y = side * (half_width + 0.6);
            if rng.gen_bool(0.5) {
                push(
                    Shape::Cylinder {
                        center: (x, y),
                        radius: 0.15,
                        z: (g, g + rng.gen_range(3.0..5.0)),
                    },
                    LabelSet::POLE,
                );
            } else {
                let trunk = rng.gen_range(2.0..3.0);
                push(
                    Shape::Cylinder {
                        center: (x, y),
                        radius: 0.2,
                        z: (g, g + trunk),
                    },
                    LabelSet::VEGETATION,
                );
                push(
                    Shape::Sphere {
                        center: v(x, y, g + trunk + 1.0),
                        radius: rng.gen_range(1.0..1.6),
                    },
                    LabelSet::VEGETATION,
                );
            }
            x += rng.gen_range(6.0..10.0);
        }
        // Parked vehicles.
        let mut x: f64 = -22.0 + rng.gen_range(0.0..3.0);
        while x < 22.0 {
            if rng.gen_bool(0.6) && x.abs() > 4.0 {
                let y = side * (half_width - 1.2);
                push(
                    Shape::Box {
                        min: v(x, y - 0.95, g + 0.2),
                        max: v(x + 4.5, y + 0.95, g + 1.6),
                    },
                    LabelSet::VEHICLES,
                );
            }
            x += rng.gen_range(6.0..9.0);
        }
        // Pedestrians on the sidewalk.
        for _ in 0..rng.gen_range(2..5) {
            let x = rng.gen_range(-15.0..15.0);
            let y = side * (half_width + rng.gen_range(1.2..2.6));
            push(
                Shape::Cylinder {
                    center: (x, y),
                    radius: 0.3,
                    z: (g + kerb, g + kerb + 1.75),
                },
                LabelSet::PEDESTRIAN,
            );
        }
    }
    // Lane marking slightly proud of the road, and a car ahead.
    push(
        Shape::Box {
            min: v(-30.0, -0.08, g),
            max: v(30.0, 0.08, g + 0.02),
        },
        LabelSet::ROADLINE,
    );
    let ahead = rng.gen_range(7.0..12.0);
    push(
        Shape::Box {
            min: v(ahead, -3.0, g + 0.2),
            max: v(ahead + 4.5, -1.1, g + 1.6),
        },
        LabelSet::VEHICLES,
    );

    Scene::new(
        prims
            .into_iter()
            .map(|p| ScenePrimitive {
                shape: convert_shape(p.shape),
                label: p.label,
            })
            .collect(),
    )
}

fn convert_shape<T: Real>(s: Shape<f64>) -> Shape<T> {
    let v = |p: Vec3<f64>| Vec3::from_f64(p.to_f64());
    match s {
        Shape::HalfSpace { normal, offset } => Shape::HalfSpace {
            normal: v(normal),
            offset: T::lit(offset),
        },
        Shape::Box { min, max } => Shape::Box {
            min: v(min),
            max: v(max),
        },
        Shape::Cylinder { center, radius, z } => Shape::Cylinder {
            center: (T::lit(center.0), T::lit(center.1)),
            radius: T::lit(radius),
            z: (T::lit(z.0), T::lit(z.1)),
        },
        Shape::Sphere { center, radius } => Shape::Sphere {
            center: v(center),
            radius: T::lit(radius),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ray(o: [f64; 3], d: [f64; 3]) -> QueryRay<f64> {
        QueryRay::new(Vec3::from_f64(o), Vec3::from_f64(d)).unwrap()
    }

    fn sphere(c: [f64; 3], r: f64, label: u8) -> ScenePrimitive<f64> {
        ScenePrimitive::new(
            Shape::Sphere {
                center: Vec3::from_f64(c),
                radius: r,
            },
            label,
        )
        .unwrap()
    }

    #[test]
    fn parallel_ray_misses_ground() {
        let s = Scene::new(vec![ScenePrimitive::ground(0.0, LabelSet::ROAD)]);
        assert!(ray_scene_intersect(&ray([0.0, 0.0, 1.0], [1.0, 0.0, 0.0]), &s, 100.0).is_none());
        let h = ray_scene_intersect(&ray([0.0, 0.0, 2.0], [0.0, 0.0, -1.0]), &s, 100.0).unwrap();
        assert_eq!((h.distance, h.label), (2.0, LabelSet::ROAD));
    }

    #[test]
    fn sphere_quadratic_root() {
        let s = Scene::new(vec![sphere([5.0, 0.0, 0.0], 1.0, 4)]);
        let h = ray_scene_intersect(&ray([0.0; 3], [1.0, 0.0, 0.0]), &s, 100.0).unwrap();
        assert_eq!(h.distance, 4.0);
        assert!(ray_scene_intersect(&ray([0.0; 3], [1.0, 0.0, 0.0]), &s, 3.9).is_none());
        assert!(ray_scene_intersect(&ray([0.0; 3], [-1.0, 0.0, 0.0]), &s, 100.0).is_none());
    }

    #[test]
    fn ties_go_to_first_primitive() {
        let s = Scene::new(vec![
            sphere([5.0, 0.0, 0.0], 1.0, 4),
            sphere([5.0, 0.0, 0.0], 1.0, 7),
        ]);
        let h = ray_scene_intersect(&ray([0.0; 3], [1.0, 0.0, 0.0]), &s, 100.0).unwrap();
        assert_eq!((h.label, h.primitive), (4, 0));
    }

    #[test]
    fn box_and_cylinder_hits() {
        let b = ScenePrimitive::new(
            Shape::Box {
                min: Vec3::new(3.0, -1.0, -1.0),
                max: Vec3::new(4.0, 1.0, 1.0),
            },
            2,
        )
        .unwrap();
        assert_eq!(b.intersect(&ray([0.0; 3], [1.0, 0.0, 0.0])), Some(3.0));
        let c = ScenePrimitive::new(
            Shape::Cylinder {
                center: (0.0, 6.0),
                radius: 0.5,
                z: (-1.0, 1.0),
            },
            9,
        )
        .unwrap();
        assert!((c.intersect(&ray([0.0; 3], [0.0, 1.0, 0.0])).unwrap() - 5.5).abs() < 1e-12);
        // Over the cap.
        assert!(c
            .intersect(&ray([0.0, 0.0, 1.5], [0.0, 1.0, 0.0]))
            .is_none());
        // Straight down onto the cap.
        assert_eq!(
            c.intersect(&ray([0.0, 6.0, 3.0], [0.0, 0.0, -1.0])),
            Some(2.0)
        );
    }

    #[test]
    fn origin_inside_hits_at_zero() {
        let s = sphere([0.0; 3], 2.0, 3);
        assert_eq!(s.intersect(&ray([0.0; 3], [0.0, 1.0, 0.0])), Some(0.0));
    }

    #[test]
    fn signed_distances() {
        let s = sphere([0.0; 3], 2.0, 3);
        assert_eq!(s.signed_distance(Vec3::new(3.0, 0.0, 0.0)), 1.0);
        let c = ScenePrimitive::new(
            Shape::Cylinder {
                center: (0.0, 0.0),
                radius: 1.0,
                z: (0.0, 2.0),
            },
            9,
        )
        .unwrap();
        assert_eq!(c.signed_distance(Vec3::new(0.0, 0.0, 3.0)), 1.0);
        assert_eq!(c.signed_distance(Vec3::new(0.5, 0.0, 1.0)), -0.5);
        let b = ScenePrimitive::new(
            Shape::Box {
                min: Vec3::new(0.0, 0.0, 0.0),
                max: Vec3::new(1.0, 1.0, 1.0),
            },
            2,
        )
        .unwrap();
        assert!((b.signed_distance(Vec3::new(2.0, 2.0, 0.5)) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_primitives() {
        assert!(ScenePrimitive::new(
            Shape::Sphere {
                center: Vec3::zero(),
                radius: 0.0
            },
            1
        )
        .is_err());
        assert!(ScenePrimitive::new(
            Shape::Sphere {
                center: Vec3::zero(),
                radius: 1.0
            },
            FREE
        )
        .is_err());
    }

    #[test]
    fn empty_scene_renders_zero_depth() {
        let (d, s) =
            render_erp_depth(&Scene::<f64>::default(), 16, 8, &RigidTransform::identity()).unwrap();
        assert!(d.data().iter().all(|&x| x == 0.0));
        assert!(s.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn erp_centre_pixel_sees_sphere() {
        let s = Scene::new(vec![sphere([5.0, 0.0, 0.0], 1.0, 4)]);
        // Odd size puts a pixel centre exactly on the forward axis.
        let (d, sem) = render_erp_depth(&s, 201, 101, &RigidTransform::identity()).unwrap();
        assert_eq!(d.value(100, 50), 4.0);
        assert_eq!(sem.value(100, 50), 4.0);
    }

    #[test]
    fn ground_slab_fills_one_layer() {
        let spec = GridSpec::<f64>::default_cylindrical();
        let slab = ScenePrimitive::new(
            Shape::Box {
                min: Vec3::new(-30.0, -30.0, 0.0),
                max: Vec3::new(30.0, 30.0, 0.4),
            },
            LabelSet::ROAD,
        )
        .unwrap();
        let gt = analytic_voxel_gt(&Scene::new(vec![slab]), &spec, 2).unwrap();
        let labels = gt.labels().unwrap();
        for (flat, &l) in labels.iter().enumerate() {
            let iz = spec.unflatten(flat)[2];
            assert_eq!(
                l,
                if iz == 7 { LabelSet::ROAD } else { FREE },
                "voxel {flat}"
            );
        }
    }

    #[test]
    fn empty_scene_gt_is_free() {
        let spec = GridSpec::<f64>::cylindrical([8, 16, 4], (0.0, 8.0), (-1.0, 1.0)).unwrap();
        let gt = analytic_voxel_gt(&Scene::default(), &spec, 2).unwrap();
        assert_eq!(gt.occupied_count(), 0);
    }

    #[test]
    fn downward_fan_sees_only_road() {
        let s = Scene::new(vec![ScenePrimitive::ground(-1.7, LabelSet::ROAD)]);
        let fan = LidarFan {
            origin: Vec3::zero(),
            azimuths: 64,
            elevations: 8,
            elevation_range: (-1.2, -0.3),
            max_range: 50.0,
        };
        let cloud = sample_scene_point_cloud(&s, &[fan], 1.0).unwrap();
        assert_eq!(cloud.len(), 64 * 8);
        assert!(cloud.labels().iter().all(|&l| l == LabelSet::ROAD));
        assert!(
            sample_scene_point_cloud(&Scene::<f64>::default(), &[fan], 1.0)
                .unwrap()
                .is_empty()
        );
        assert!(sample_scene_point_cloud(&s, &[fan], 0.0).is_err());
    }

    #[test]
    fn default_rig_layout() {
        let rig = default_rig::<f64>();
        assert_eq!(rig.len(), 6);
        // Image corner stays inside the 190° circle, so the full FOV fits.
        assert!(190.0 * (95f64.to_radians()) < 320.0);
    }

    #[test]
    fn demo_scenes_keep_ego_clear() {
        for seed in 0..5 {
            let s = demo_scene::<f64>(seed);
            assert!(s.label_at(Vec3::zero()).is_none());
            assert_eq!(s, demo_scene(seed));
        }
    }
}
