//! Rigid transforms, vectors and camera models.
//!
//! Ego axes are x forward, y left, z up (right-handed).

mod camera;
mod erp;
mod linalg;
mod transform;

pub use camera::{
    fisheye_project, fisheye_unproject, horizontal_camera_pose, FisheyeCamera, MAX_FOV,
};
pub use erp::{
    erp_depth_to_point_cloud, erp_pixel_to_direction, ErpImage, LabeledPointCloud, RasterKind,
    UNLABELED,
};
pub use linalg::{Mat3, Vec3};
pub use transform::{transform_point, RigidTransform};
