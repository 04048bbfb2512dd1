//! Cylindrical and cuboid voxel lattices.

mod spec;
mod voxel;
mod voxelize;

pub(crate) use spec::snapped_floor;
pub use spec::{index_to_center, point_to_index, CoordSys, GridSpec, VoxelIndex};
pub use voxel::{LabelSet, Payload, PayloadKind, VoxelGrid, FREE};
pub use voxelize::{class_frequencies, voxelize_semantic};
