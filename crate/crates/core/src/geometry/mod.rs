//! Pinhole cameras, rigid poses, pixel grids, and the projection /
//! back-projection pair.

mod camera;
mod cloud;
mod maps;

pub use camera::{
    compose, invert, orthonormality_drift, relative, reorthonormalize, rotation_angle_between,
    CameraIntrinsics, CameraPose,
};
pub use cloud::{backproject, project, unproject_pixel, PointCloud, Projection};
pub use maps::{median, BinaryMask, DepthMap, Image, Plane};
