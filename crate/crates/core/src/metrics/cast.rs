//! Exact first-hit ray casting through voxel lattices.
//!
//! Cuboid lattices use the incremental Amanatides–Woo walk over axis plane
//! crossings. Cylindrical lattices collect every crossing of the ray with the
//! r-cylinders (quadratic in t), the θ half-planes and the z-planes (both
//! linear), sort them, and read the cell of each interval off its midpoint.

use std::ops::ControlFlow;

use crate::grid::{CoordSys, GridSpec, VoxelGrid, VoxelIndex, FREE};
use crate::metrics::{QueryRay, RayHit};
use crate::scalar::Real;

/// Discriminants below this are tangent grazes, not crossings.
const TANGENT_GUARD: f64 = 1e-12;

/// Interval of a ray inside one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpan<T> {
    pub voxel: VoxelIndex,
    pub t_entry: T,
    pub t_exit: T,
}

/// Visits the cells a ray passes through, in order, up to `max_dist`.
pub fn walk_cells<T: Real, B>(
    ray: &QueryRay<T>,
    spec: &GridSpec<T>,
    max_dist: T,
    visit: impl FnMut(CellSpan<T>) -> ControlFlow<B>,
) -> Option<B> {
    if !(max_dist > T::zero()) {
        return None;
    }
    match spec.coord_sys() {
        CoordSys::Cuboid => walk_cuboid(ray, spec, max_dist, visit),
        CoordSys::Cylindrical => walk_cylindrical(ray, spec, max_dist, visit),
    }
}

/// Ordered cell sequence of a ray; consecutive duplicates are merged.
pub fn cell_sequence<T: Real>(
    ray: &QueryRay<T>,
    spec: &GridSpec<T>,
    max_dist: T,
) -> Vec<CellSpan<T>> {
    let mut out = Vec::new();
    walk_cells::<T, ()>(ray, spec, max_dist, |span| {
        out.push(span);
        ControlFlow::Continue(())
    });
    out
}

/// Entry distance and label of the first non-free voxel along `ray`.
///
/// A ray starting inside an occupied voxel hits at distance 0.
pub fn cast_ray<T: Real>(ray: &QueryRay<T>, grid: &VoxelGrid<T>, max_dist: T) -> Option<RayHit<T>> {
    let labels = grid.labels().ok()?;
    let spec = grid.spec();
    walk_cells(ray, spec, max_dist, |span| {
        let label = labels[spec.flat_index(span.voxel)];
        if label != FREE {
            ControlFlow::Break(RayHit {
                distance: span.t_entry,
                label,
                voxel: span.voxel,
            })
        } else {
            ControlFlow::Continue(())
        }
    })
}

fn walk_cuboid<T: Real, B>(
    ray: &QueryRay<T>,
    spec: &GridSpec<T>,
    max_dist: T,
    mut visit: impl FnMut(CellSpan<T>) -> ControlFlow<B>,
) -> Option<B> {
    let o = ray.origin;
    let d = ray.direction();
    let ranges = spec.ranges();
    let dims = spec.dims();

    let (mut t0, mut t1) = (T::zero(), max_dist);
    for k in 0..3 {
        let (lo, hi) = ranges[k];
        if d[k] == T::zero() {
            if !(o[k] >= lo && o[k] < hi) {
                return None;
            }
        } else {
            let a = (lo - o[k]) / d[k];
            let b = (hi - o[k]) / d[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    if !(t0 < t1) {
        return None;
    }

    let start = ray.at(t0);
    let mut cell = [0i64; 3];
    let mut step = [0i64; 3];
    let mut t_max = [T::infinity(); 3];
    let mut t_delta = [T::infinity(); 3];
    for k in 0..3 {
        let (lo, _) = ranges[k];
        let w = spec.bin_width(k);
        let n = dims[k] as i64;
        let i = crate::grid::snapped_floor((start[k] - lo) / w)
            .to_i64()
            .unwrap_or(0)
            .clamp(0, n - 1);
        cell[k] = i;
        if d[k] > T::zero() {
            step[k] = 1;
            t_max[k] = (lo + T::lit((i + 1) as f64) * w - o[k]) / d[k];
            t_delta[k] = w / d[k];
        } else if d[k] < T::zero() {
            step[k] = -1;
            t_max[k] = (lo + T::lit(i as f64) * w - o[k]) / d[k];
            t_delta[k] = -w / d[k];
        }
    }

    let mut t = t0;
    loop {
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        let t_next = t_max[axis].min(t1);
        let voxel = [cell[0] as usize, cell[1] as usize, cell[2] as usize];
        if t_next > t {
            if let ControlFlow::Break(b) = visit(CellSpan {
                voxel,
                t_entry: t,
                t_exit: t_next,
            }) {
                return Some(b);
            }
        }
        if t_max[axis] >= t1 {
            return None;
        }
        t = t_next;
        cell[axis] += step[axis];
        if cell[axis] < 0 || cell[axis] >= dims[axis] as i64 {
            return None;
        }
        t_max[axis] += t_delta[axis];
    }
}

fn walk_cylindrical<T: Real, B>(
    ray: &QueryRay<T>,
    spec: &GridSpec<T>,
    max_dist: T,
    mut visit: impl FnMut(CellSpan<T>) -> ControlFlow<B>,
) -> Option<B> {
    let crossings = cylindrical_crossings(ray, spec, max_dist);
    let half = T::lit(0.5);
    let mut current: Option<CellSpan<T>> = None;
    for w in crossings.windows(2) {
        let (a, b) = (w[0], w[1]);
        let cell = spec.point_to_index(ray.at((a + b) * half));
        match (&mut current, cell) {
            (Some(span), Some(v)) if span.voxel == v => span.t_exit = b,
            (_, cell) => {
                if let Some(span) = current.take() {
                    if let ControlFlow::Break(x) = visit(span) {
                        return Some(x);
                    }
                }
                current = cell.map(|voxel| CellSpan {
                    voxel,
                    t_entry: a,
                    t_exit: b,
                });
            }
        }
    }
    match current.map(visit) {
        Some(ControlFlow::Break(x)) => Some(x),
        _ => None,
    }
}

/// Sorted parameters in `[0, max_dist]` where the ray crosses a cell
/// boundary, bracketed by 0 and `max_dist`.
fn cylindrical_crossings<T: Real>(ray: &QueryRay<T>, spec: &GridSpec<T>, max_dist: T) -> Vec<T> {
    let o = ray.origin;
    let d = ray.direction();
    let [d_r, d_t, d_z] = spec.dims();
    let ranges = spec.ranges();
    let mut ts = Vec::with_capacity(2 * (d_r + 1) + d_t + d_z + 4);
    ts.push(T::zero());
    ts.push(max_dist);
    let mut push = |t: T| {
        if t > T::zero() && t < max_dist {
            ts.push(t);
        }
    };

    if d.z != T::zero() {
        let w = spec.bin_width(2);
        for k in 0..=d_z {
            let z = ranges[2].0 + T::lit(k as f64) * w;
            push((z - o.z) / d.z);
        }
    }

    // |o_xy + t·d_xy|² = R²  ⇔  a·t² + 2b·t + (|o_xy|² − R²) = 0.
    let a = d.x * d.x + d.y * d.y;
    let b = o.x * d.x + o.y * d.y;
    let c0 = o.x * o.x + o.y * o.y;
    if a > T::zero() {
        let w = spec.bin_width(0);
        let guard = T::lit(TANGENT_GUARD);
        for k in 0..=d_r {
            let radius = ranges[0].0 + T::lit(k as f64) * w;
            if radius <= T::zero() {
                continue;
            }
            let disc = b * b - a * (c0 - radius * radius);
            if disc < guard {
                continue;
            }
            let s = disc.sqrt();
            push((-b - s) / a);
            push((-b + s) / a);
        }
        // Passing through the axis flips θ by π without crossing a half-plane.
        let t_axis = -b / a;
        let closest = ray.at(t_axis);
        if closest.planar_norm() <= T::lit(1e-9) {
            push(t_axis);
        }

        let w = spec.bin_width(1);
        for j in 0..d_t {
            let alpha = ranges[1].0 + T::lit(j as f64) * w;
            let (s, c) = alpha.sin_cos();
            // Line through the axis with direction (c, s); normal (−s, c).
            let denom = -s * d.x + c * d.y;
            if denom == T::zero() {
                continue;
            }
            let t = (s * o.x - c * o.y) / denom;
            let p = ray.at(t);
            if p.x * c + p.y * s > T::zero() {
                push(t);
            }
        }
    }

    ts.sort_by(|x, y| x.partial_cmp(y).expect("finite crossings"));
    ts.dedup_by(|x, y| (*x - *y).abs() <= T::lit(1e-12));
    ts
}
