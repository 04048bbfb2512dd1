//! Class-agnostic candidate occupancy ("sketch") and distance-banded radial
//! dilation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geom::LabeledPointCloud;
use crate::grid::{CoordSys, GridSpec, VoxelGrid};
use crate::scalar::Real;

/// Radial dilation windows per distance band.
///
/// Band `k` covers radii `(end[k-1], end[k]]`; the first band starts at the
/// grid's inner radius.
#[derive(Debug, Clone, PartialEq)]
pub struct DilationSchedule<T> {
    bands: Vec<(T, usize)>,
}

impl<T: Real> DilationSchedule<T> {
    pub fn new(bands: Vec<(T, usize)>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::domain("dilation schedule needs at least one band"));
        }
        for w in bands.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::domain("band ends must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(Error::domain(
                    "dilation windows must not shrink with distance",
                ));
            }
        }
        if bands.iter().any(|b| !b.0.is_finite()) {
            return Err(Error::domain("band ends must be finite"));
        }
        Ok(Self { bands })
    }

    /// A single band with window `w` out to `r_max`.
    pub fn uniform(r_max: T, window: usize) -> Self {
        Self {
            bands: vec![(r_max, window)],
        }
    }

    /// Window 0 up to 8.5 m, 1 up to 17 m and 2 out to 25.6 m.
    pub fn default_schedule() -> Self {
        Self {
            bands: vec![(T::lit(8.5), 0), (T::lit(17.0), 1), (T::lit(25.6), 2)],
        }
    }

    pub fn bands(&self) -> &[(T, usize)] {
        &self.bands
    }

    /// Checks that the last band ends at the spec's outer radius.
    pub fn validate_for(&self, spec: &GridSpec<T>) -> Result<()> {
        let r_max = spec.ranges()[0].1;
        let last = self.bands.last().expect("non-empty").0;
        if (last - r_max).abs() > T::lit(1e-4) {
            return Err(Error::domain(format!(
                "schedule ends at {last} but the grid ends at {r_max}"
            )));
        }
        if self.bands[0].0 <= spec.ranges()[0].0 {
            return Err(Error::domain(
                "first band ends inside the grid's inner radius",
            ));
        }
        Ok(())
    }

    /// Window of the band containing radius `r`; radii past the last band use
    /// the last window.
    pub fn window_for(&self, r: T) -> usize {
        self.bands
            .iter()
            .find(|(end, _)| r <= *end)
            .or(self.bands.last())
            .map_or(0, |b| b.1)
    }

    pub fn max_window(&self) -> usize {
        self.bands.iter().map(|b| b.1).max().unwrap_or(0)
    }
}

impl<T: Real> fmt::Display for DilationSchedule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.bands.iter().map(|(e, w)| format!("{e}:{w}")).collect();
        f.write_str(&parts.join(","))
    }
}

impl<T: Real> FromStr for DilationSchedule<T> {
    type Err = Error;

    /// Parses `"8.5:0,17:1,25.6:2"`.
    fn from_str(s: &str) -> Result<Self> {
        let mut bands = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (end, win) = part.split_once(':').ok_or_else(|| {
                Error::domain(format!("schedule entry `{part}` is not end:window"))
            })?;
            let end: f64 = end
                .trim()
                .parse()
                .map_err(|_| Error::domain(format!("bad band end `{end}`")))?;
            let win: usize = win
                .trim()
                .parse()
                .map_err(|_| Error::domain(format!("bad window `{win}`")))?;
            bands.push((T::lit(end), win));
        }
        Self::new(bands)
    }
}

/// Occupancy grid of candidate voxels over a cylindrical lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMask<T> {
    grid: VoxelGrid<T>,
    count: usize,
}

impl<T: Real> CandidateMask<T> {
    pub fn from_grid(grid: VoxelGrid<T>) -> Result<Self> {
        if grid.spec().coord_sys() != CoordSys::Cylindrical {
            return Err(Error::domain("candidate masks live on cylindrical grids"));
        }
        let count = grid.occupancy()?.iter().filter(|&&b| b == 1).count();
        Ok(Self { grid, count })
    }

    pub fn empty(spec: GridSpec<T>) -> Result<Self> {
        Self::from_grid(VoxelGrid::empty_occupancy(spec))
    }

    pub fn grid(&self) -> &VoxelGrid<T> {
        &self.grid
    }

    pub fn into_grid(self) -> VoxelGrid<T> {
        self.grid
    }

    pub fn spec(&self) -> &GridSpec<T> {
        self.grid.spec()
    }

    pub fn bits(&self) -> &[u8] {
        self.grid
            .occupancy()
            .expect("occupancy payload by construction")
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn occupied_fraction(&self) -> f64 {
        self.count as f64 / self.spec().voxel_count() as f64
    }

    pub fn is_occupied(&self, flat: usize) -> bool {
        self.bits()[flat] == 1
    }

    /// Flat offsets of occupied voxels in ascending order.
    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
    }

    /// True when every voxel set in `other` is set here.
    pub fn contains(&self, other: &Self) -> bool {
        self.bits().iter().zip(other.bits()).all(|(&a, &b)| a >= b)
    }
}

/// Marks voxels holding at least `min_points` points; labels are ignored.
pub fn sketch_from_points<T: Real>(
    cloud: &LabeledPointCloud<T>,
    spec: &GridSpec<T>,
    min_points: usize,
) -> Result<CandidateMask<T>> {
    if spec.coord_sys() != CoordSys::Cylindrical {
        return Err(Error::domain("sketching requires a cylindrical spec"));
    }
    if min_points == 0 {
        return Err(Error::domain("min_points must be at least 1"));
    }
    let mut counts = vec![0u32; spec.voxel_count()];
    for &p in cloud.points() {
        if let Some(i) = spec.point_to_index(p) {
            let c = &mut counts[spec.flat_index(i)];
            *c = c.saturating_add(1);
        }
    }
    let bits = counts
        .iter()
        .map(|&c| u8::from(c as usize >= min_points))
        .collect();
    CandidateMask::from_grid(VoxelGrid::new(
        *spec,
        crate::grid::Payload::Occupancy(bits),
    )?)
}

/// Spreads every occupied voxel `±w` bins along r, where `w` is the window
/// of the band holding the seed voxel's centre radius. θ and z are untouched
/// and only seeds from the input mask spread.
pub fn dilate_radial<T: Real>(
    mask: &CandidateMask<T>,
    schedule: &DilationSchedule<T>,
) -> CandidateMask<T> {
    let spec = *mask.spec();
    let [d_r, d_t, d_z] = spec.dims();
    let column_stride = d_t * d_z;
    let windows: Vec<usize> = (0..d_r)
        .map(|ir| schedule.window_for(spec.center_native([ir, 0, 0])[0]))
        .collect();

    let src = mask.bits();
    let mut out = src.to_vec();
    // Flat offset = ir·(Dθ·Dz) + column, so each (θ, z) column is a strided 1-D scan.
    for column in 0..column_stride {
        for (ir, &w) in windows.iter().enumerate() {
            if w == 0 || src[ir * column_stride + column] == 0 {
                continue;
            }
            let lo = ir.saturating_sub(w);
            let hi = (ir + w).min(d_r - 1);
            for jr in lo..=hi {
                out[jr * column_stride + column] = 1;
            }
        }
    }
    let grid =
        VoxelGrid::new(spec, crate::grid::Payload::Occupancy(out)).expect("same shape as input");
    CandidateMask::from_grid(grid).expect("cylindrical by construction")
}
