use nalgebra::{Vector2, Vector3};

use super::{BinaryMask, CameraIntrinsics, CameraPose, DepthMap, Image};
use crate::error::{ensure_same_dims, Error, Result};

/// Colored 3D points in world coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    pub colors: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vector3<f64>>, colors: Vec<[f64; 3]>) -> Result<Self> {
        if positions.len() != colors.len() {
            return Err(Error::shape(format!(
                "{} positions vs {} colors",
                positions.len(),
                colors.len()
            )));
        }
        if positions.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::param("point cloud has non-finite positions"));
        }
        let colors = colors
            .into_iter()
            .map(|c| c.map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }))
            .collect();
        Ok(Self { positions, colors })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.positions.iter().sum();
        Some(sum / self.len() as f64)
    }

    pub fn extend(&mut self, other: PointCloud) {
        self.positions.extend(other.positions);
        self.colors.extend(other.colors);
    }
}

/// Result of projecting a world point through a camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// `(u, v)` in pixels. Meaningless when `behind_camera` is set.
    pub pixel: Vector2<f64>,
    /// Camera-space z.
    pub depth: f64,
    pub behind_camera: bool,
}

pub fn project(point: &Vector3<f64>, k: &CameraIntrinsics, e: &CameraPose) -> Projection {
    let cam = e.transform_point(point);
    let z = cam.z;
    if z <= 0.0 {
        return Projection {
            pixel: Vector2::new(f64::NAN, f64::NAN),
            depth: z,
            behind_camera: true,
        };
    }
    Projection {
        pixel: Vector2::new(k.fx * cam.x / z + k.cx, k.fy * cam.y / z + k.cy),
        depth: z,
        behind_camera: false,
    }
}

/// Lifts pixel `(u, v)` at camera-space depth `z` into world coordinates.
pub fn unproject_pixel(
    u: f64,
    v: f64,
    z: f64,
    k: &CameraIntrinsics,
    e_inv: &CameraPose,
) -> Vector3<f64> {
    let cam = Vector3::new((u - k.cx) / k.fx * z, (v - k.cy) / k.fy * z, z);
    e_inv.transform_point(&cam)
}

/// One world point per masked pixel: `E⁻¹ · (D(u,v) · K⁻¹ · (u, v, 1)ᵀ)`.
pub fn backproject(
    depth: &DepthMap,
    mask: &BinaryMask,
    colors: &Image,
    k: &CameraIntrinsics,
    e: &CameraPose,
) -> Result<PointCloud> {
    ensure_same_dims("backproject depth/mask", depth.dims(), mask.dims())?;
    ensure_same_dims("backproject depth/colors", depth.dims(), colors.dims())?;
    ensure_same_dims("backproject depth/intrinsics", depth.dims(), k.dims())?;
    if !(k.fx != 0.0 && k.fy != 0.0) || !k.fx.is_finite() || !k.fy.is_finite() {
        return Err(Error::param("intrinsics not invertible (zero focal length)"));
    }
    let e_inv = e.inverse();
    let n = mask.count();
    let mut positions = Vec::with_capacity(n);
    let mut rgb = Vec::with_capacity(n);
    for v in 0..depth.height {
        for u in 0..depth.width {
            if !mask.get(u, v) {
                continue;
            }
            let z = depth.get(u, v).ok_or_else(|| {
                Error::param(format!("mask selects pixel ({u}, {v}) with invalid depth"))
            })?;
            positions.push(unproject_pixel(u as f64, v as f64, z, k, &e_inv));
            rgb.push(colors.pixel(u, v));
        }
    }
    PointCloud::new(positions, rgb)
}
