//! RayIoU evaluation: query rays, exact first-hit casting and confusion
//! accounting with distance thresholds and distance bands.

mod cast;
mod rayiou;
mod rays;

pub use cast::{cast_ray, cell_sequence, walk_cells, CellSpan};
pub use rayiou::{
    cast_pairs, ray_iou, report_from_pairs, BandReport, ClassCounts, HitPair, RayIouReport,
    ThresholdReport, DEFAULT_BANDS, DEFAULT_THRESHOLDS,
};
pub use rays::{generate_rays, QueryRay, RayHit, RayPattern};
