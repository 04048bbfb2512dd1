use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoordSys {
    /// Axes (x, y, z) in meters.
    Cuboid,
    /// Axes (r, θ, z): meters, radians over `[-π, π)`, meters.
    Cylindrical,
}

impl CoordSys {
    pub fn code(self) -> u8 {
        match self {
            CoordSys::Cuboid => 0,
            CoordSys::Cylindrical => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(CoordSys::Cuboid),
            1 => Some(CoordSys::Cylindrical),
            _ => None,
        }
    }
}

/// Voxel index `(i0, i1, i2)` along the spec's three axes.
pub type VoxelIndex = [usize; 3];

/// Uniform lattice over a cuboid or cylindrical domain.
///
/// Every axis bins the half-open interval `[min, max)` into `dims[k]` equal
/// bins. The cylindrical θ axis is always `[-π, π)` and wraps, so θ = π lands
/// in bin 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    coord_sys: CoordSys,
    dims: [usize; 3],
    ranges: [(T, T); 3],
}

impl<T: Real> GridSpec<T> {
    pub fn new(coord_sys: CoordSys, dims: [usize; 3], ranges: [(T, T); 3]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::domain(format!(
                "bin counts must be ≥ 1, got {dims:?}"
            )));
        }
        if dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .is_none()
        {
            return Err(Error::domain("voxel count overflows"));
        }
        for (k, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::domain(format!(
                    "axis {k} range ({lo}, {hi}) is degenerate"
                )));
            }
        }
        let mut ranges = ranges;
        if coord_sys == CoordSys::Cylindrical {
            let (lo, hi) = ranges[1];
            let tol = T::lit(1e-6);
            if (lo + T::PI()).abs() > tol || (hi - T::PI()).abs() > tol {
                return Err(Error::domain(format!(
                    "cylindrical θ range must be [-π, π), got ({lo}, {hi})"
                )));
            }
            ranges[1] = (-T::PI(), T::PI());
            if ranges[0].0 < T::zero() {
                return Err(Error::domain("cylindrical r range must start at r ≥ 0"));
            }
        }
        Ok(Self {
            coord_sys,
            dims,
            ranges,
        })
    }

    /// Cylindrical spec with the full θ circle.
    pub fn cylindrical(dims: [usize; 3], r: (T, T), z: (T, T)) -> Result<Self> {
        Self::new(CoordSys::Cylindrical, dims, [r, (-T::PI(), T::PI()), z])
    }

    pub fn cuboid(dims: [usize; 3], ranges: [(T, T); 3]) -> Result<Self> {
        Self::new(CoordSys::Cuboid, dims, ranges)
    }

    /// 128 × 200 × 16 bins over r ∈ [0, 25.6) m and z ∈ [-2.8, 3.6) m.
    pub fn default_cylindrical() -> Self {
        Self::cylindrical(
            [128, 200, 16],
            (T::zero(), T::lit(25.6)),
            (T::lit(-2.8), T::lit(3.6)),
        )
        .expect("valid default")
    }

    /// Cuboid lattice with the same voxel count as [`Self::default_cylindrical`]:
    /// 160 × 160 × 16 bins of 0.32 m × 0.32 m × 0.4 m covering the same height band.
    pub fn default_cuboid() -> Self {
        let h = T::lit(25.6);
        Self::cuboid(
            [160, 160, 16],
            [(-h, h), (-h, h), (T::lit(-2.8), T::lit(3.6))],
        )
        .expect("valid default")
    }

    pub fn coord_sys(&self) -> CoordSys {
        self.coord_sys
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn ranges(&self) -> [(T, T); 3] {
        self.ranges
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn bin_width(&self, axis: usize) -> T {
        let (lo, hi) = self.ranges[axis];
        (hi - lo) / T::lit(self.dims[axis] as f64)
    }

    /// Flat offset in `(i0·D1 + i1)·D2 + i2` order.
    #[inline]
    pub fn flat_index(&self, i: VoxelIndex) -> usize {
        (i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]
    }

    #[inline]
    pub fn unflatten(&self, flat: usize) -> VoxelIndex {
        let i2 = flat % self.dims[2];
        let rest = flat / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], i2]
    }

    pub fn contains_index(&self, i: VoxelIndex) -> bool {
        (0..3).all(|k| i[k] < self.dims[k])
    }

    /// Native coordinates: `(r, θ, z)` for cylindrical grids, `(x, y, z)` otherwise.
    #[inline]
    pub fn native_coords(&self, p: Vec3<T>) -> [T; 3] {
        match self.coord_sys {
            CoordSys::Cuboid => [p.x, p.y, p.z],
            CoordSys::Cylindrical => {
                // atan2(0, 0) = 0 by convention on the axis.
                [p.planar_norm(), p.y.atan2(p.x), p.z]
            }
        }
    }

    #[inline]
    pub fn native_to_cartesian(&self, c: [T; 3]) -> Vec3<T> {
        match self.coord_sys {
            CoordSys::Cuboid => Vec3::new(c[0], c[1], c[2]),
            CoordSys::Cylindrical => {
                let (s, co) = c[1].sin_cos();
                Vec3::new(c[0] * co, c[0] * s, c[2])
            }
        }
    }

    /// Bin of a native coordinate along `axis`, honouring the θ wrap.
    #[inline]
    pub fn axis_bin(&self, axis: usize, value: T) -> Option<usize> {
        let (lo, _) = self.ranges[axis];
        let f = snapped_floor((value - lo) / self.bin_width(axis));
        if !f.is_finite() {
            return None;
        }
        let d = self.dims[axis] as i64;
        let i = f.to_i64()?;
        if self.coord_sys == CoordSys::Cylindrical && axis == 1 {
            Some(i.rem_euclid(d) as usize)
        } else if (0..d).contains(&i) {
            Some(i as usize)
        } else {
            None
        }
    }

    /// Voxel containing `p`, or `None` when `p` lies outside the domain.
    pub fn point_to_index(&self, p: Vec3<T>) -> Option<VoxelIndex> {
        let c = self.native_coords(p);
        Some([
            self.axis_bin(0, c[0])?,
            self.axis_bin(1, c[1])?,
            self.axis_bin(2, c[2])?,
        ])
    }

    /// Native coordinates of a voxel's bin midpoints.
    pub fn center_native(&self, i: VoxelIndex) -> [T; 3] {
        let half = T::lit(0.5);
        let mut c = [T::zero(); 3];
        for k in 0..3 {
            c[k] = self.ranges[k].0 + (T::lit(i[k] as f64) + half) * self.bin_width(k);
        }
        c
    }

    pub fn index_to_center(&self, i: VoxelIndex) -> Result<Vec3<T>> {
        if !self.contains_index(i) {
            return Err(Error::domain(format!(
                "index {i:?} outside dims {:?}",
                self.dims
            )));
        }
        Ok(self.native_to_cartesian(self.center_native(i)))
    }

    /// Continuous index coordinates in which voxel centres sit on integers.
    /// θ is not wrapped.
    pub fn fractional_index(&self, p: Vec3<T>) -> [T; 3] {
        let c = self.native_coords(p);
        let half = T::lit(0.5);
        let mut f = [T::zero(); 3];
        for k in 0..3 {
            f[k] = (c[k] - self.ranges[k].0) / self.bin_width(k) - half;
        }
        f
    }

    /// Equality up to `f32` rounding of the ranges, which is all the binary
    /// format preserves.
    pub fn same_lattice(&self, o: &Self) -> bool {
        self.coord_sys == o.coord_sys
            && self.dims == o.dims
            && self
                .ranges
                .iter()
                .zip(o.ranges.iter())
                .all(|(a, b)| a.0.as_f32() == b.0.as_f32() && a.1.as_f32() == b.1.as_f32())
    }

    /// Axis-aligned Cartesian bounding box of the domain.
    pub fn cartesian_bounds(&self) -> (Vec3<T>, Vec3<T>) {
        match self.coord_sys {
            CoordSys::Cuboid => (
                Vec3::new(self.ranges[0].0, self.ranges[1].0, self.ranges[2].0),
                Vec3::new(self.ranges[0].1, self.ranges[1].1, self.ranges[2].1),
            ),
            CoordSys::Cylindrical => {
                let r = self.ranges[0].1;
                (
                    Vec3::new(-r, -r, self.ranges[2].0),
                    Vec3::new(r, r, self.ranges[2].1),
                )
            }
        }
    }

    /// Length of the bounding-box diagonal; no straight path through the
    /// domain is longer.
    pub fn max_ray_length(&self) -> T {
        let (lo, hi) = self.cartesian_bounds();
        (hi - lo).norm()
    }

    pub fn convert<U: Real>(&self) -> GridSpec<U> {
        let r = self
            .ranges
            .map(|(a, b)| (U::lit(a.as_f64()), U::lit(b.as_f64())));
        GridSpec::new(self.coord_sys, self.dims, r).expect("conversion preserves validity")
    }
}

/// Floor that treats values within a few ulps below an integer as that
/// integer, so exact decimal boundaries (2.8 / 0.4) land in the upper bin.
#[inline]
pub(crate) fn snapped_floor<T: Real>(f: T) -> T {
    let r = f.round();
    if (f - r).abs() <= T::epsilon() * T::lit(64.0) * f.abs().max(T::one()) {
        r
    } else {
        f.floor()
    }
}

/// Free-function form of [`GridSpec::point_to_index`].
pub fn point_to_index<T: Real>(p: Vec3<T>, spec: &GridSpec<T>) -> Option<VoxelIndex> {
    spec.point_to_index(p)
}

/// Free-function form of [`GridSpec::index_to_center`].
pub fn index_to_center<T: Real>(i: VoxelIndex, spec: &GridSpec<T>) -> Result<Vec3<T>> {
    spec.index_to_center(i)
}
