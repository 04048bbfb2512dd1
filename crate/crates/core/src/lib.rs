//! Cylindrical voxel occupancy toolkit for surround-view fisheye rigs.
//!
//! Geometry, cylindrical and cuboid lattices, sparse candidate sketches,
//! image-to-voxel lifting with temporal fusion, training losses, RayIoU
//! evaluation, an analytic scene oracle and binary codecs. Numeric code is
//! generic over [`scalar::Real`] (`f32` or `f64`); the aliases below fix it
//! to `f64`, and the `*32` aliases to `f32`.

// `!(a < b)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geom;
pub mod grid;
pub mod io;
pub mod lift;
pub mod losses;
pub mod metrics;
pub mod scalar;
pub mod sketch;
pub mod synth;

pub use error::{Error, FormatError, Result};

pub type Vec3 = geom::Vec3<f64>;
pub type RigidTransform = geom::RigidTransform<f64>;
pub type FisheyeCamera = geom::FisheyeCamera<f64>;
pub type LabeledPointCloud = geom::LabeledPointCloud<f64>;
pub type GridSpec = grid::GridSpec<f64>;
pub type VoxelGrid = grid::VoxelGrid<f64>;
pub type CandidateMask = sketch::CandidateMask<f64>;
pub type DilationSchedule = sketch::DilationSchedule<f64>;
pub type HitSet = lift::HitSet<f64>;
pub type QueryRay = metrics::QueryRay<f64>;
pub type ProbGrid = losses::ProbGrid<f64>;
pub type Scene = synth::Scene<f64>;

pub type Vec3f32 = geom::Vec3<f32>;
pub type RigidTransform32 = geom::RigidTransform<f32>;
pub type FisheyeCamera32 = geom::FisheyeCamera<f32>;
pub type GridSpec32 = grid::GridSpec<f32>;
pub type VoxelGrid32 = grid::VoxelGrid<f32>;
pub type ProbGrid32 = losses::ProbGrid<f32>;
