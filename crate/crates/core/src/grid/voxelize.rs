use crate::error::{Error, Result};
use crate::geom::LabeledPointCloud;
use crate::grid::{GridSpec, LabelSet, VoxelGrid, FREE};
use crate::scalar::Real;

/// Labels each voxel with the most frequent class among the points inside it.
///
/// Voxels without points are free; ties go to the smallest class id. The
/// result does not depend on point order. Points outside the domain are
/// ignored.
pub fn voxelize_semantic<T: Real>(
    cloud: &LabeledPointCloud<T>,
    spec: &GridSpec<T>,
    labels: &LabelSet,
) -> Result<VoxelGrid<T>> {
    let c = labels.num_classes();
    if let Some(bad) = cloud.labels().iter().find(|&&l| l as usize >= c) {
        return Err(Error::domain(format!(
            "point label {bad} ≥ class count {c}"
        )));
    }
    let mut keyed: Vec<(usize, u8)> = cloud
        .iter()
        .filter_map(|(p, l)| spec.point_to_index(p).map(|i| (spec.flat_index(i), l)))
        .collect();
    keyed.sort_unstable();

    let mut grid = VoxelGrid::free(*spec);
    let out = grid.labels_mut()?;
    let mut start = 0;
    while start < keyed.len() {
        let voxel = keyed[start].0;
        let mut end = start;
        let (mut best_label, mut best_count) = (FREE, 0usize);
        while end < keyed.len() && keyed[end].0 == voxel {
            let label = keyed[end].1;
            let run_start = end;
            while end < keyed.len() && keyed[end] == (voxel, label) {
                end += 1;
            }
            // Runs come in ascending label order, so a strict `>` keeps the
            // smallest id among tied maxima.
            if end - run_start > best_count {
                best_count = end - run_start;
                best_label = label;
            }
        }
        out[voxel] = best_label;
        start = end;
    }
    Ok(grid)
}

/// Fraction of voxels carrying each class id in `0..num_classes`.
pub fn class_frequencies<T: Real>(grid: &VoxelGrid<T>, num_classes: usize) -> Result<Vec<T>> {
    let labels = grid.labels()?;
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        let slot = counts
            .get_mut(l as usize)
            .ok_or_else(|| Error::domain(format!("label {l} ≥ class count {num_classes}")))?;
        *slot += 1;
    }
    let total = T::lit(labels.len() as f64);
    Ok(counts
        .into_iter()
        .map(|n| T::lit(n as f64) / total)
        .collect())
}
