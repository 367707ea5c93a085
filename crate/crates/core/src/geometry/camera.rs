use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole intrinsics. Pixel `(u, v)` is (column, row) with pixel centers at
/// integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with a horizontal field of view and the principal point at
    /// the image center.
    pub fn from_fov(hfov_deg: f64, width: usize, height: usize) -> Result<Self> {
        if !(hfov_deg > 0.0 && hfov_deg < 180.0) {
            return Err(Error::param(format!("field of view {hfov_deg} out of (0, 180)")));
        }
        let f = (width as f64 / 2.0) / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::param("intrinsics: width and height must be positive"));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::param(format!(
                "intrinsics: focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64)
            || !(self.cy >= 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::param(format!(
                "intrinsics: principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Same camera at a different resolution (focal and principal point scaled).
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: (self.cx + 0.5) * sx - 0.5,
            cy: (self.cy + 0.5) * sy - 0.5,
            width,
            height,
        }
    }
}

/// World-to-camera rigid transform: `x_cam = R * x_world + t`.
///
/// The camera looks down its +z axis, x to the right, y down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

const ORTHO_TOL: f64 = 1e-6;
const DRIFT_REPAIR: f64 = 1e-10;

impl Default for CameraPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl CameraPose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Checked constructor.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().all(|v| v.is_finite())
            || !self.translation.iter().all(|v| v.is_finite())
        {
            return Err(Error::param("pose has non-finite entries"));
        }
        let drift = orthonormality_drift(&self.rotation);
        if drift > ORTHO_TOL {
            return Err(Error::param(format!("rotation not orthonormal (drift {drift:e})")));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(Error::param(format!("rotation determinant {det} != 1")));
        }
        Ok(())
    }

    /// Pose of a camera at `center` with orientation `rotation` (world-to-camera).
    pub fn from_center(rotation: Matrix3<f64>, center: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation: -(rotation * center),
        }
    }

    /// Camera at `eye` looking at `target`. `up` is the world direction that
    /// should appear upward in the image (camera -y).
    pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Result<Self> {
        let forward = target - eye;
        if forward.norm() < 1e-12 {
            return Err(Error::param("look_at: eye coincides with target"));
        }
        let z = forward.normalize();
        let x = z.cross(&up);
        if x.norm() < 1e-12 {
            return Err(Error::param("look_at: up is parallel to the viewing direction"));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        // Rows of R are the camera axes expressed in world coordinates.
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self::from_center(rotation, eye))
    }

    /// Camera center in world coordinates, `c = -Rᵀ t`.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Viewing direction (+z camera axis) in world coordinates.
    pub fn forward(&self) -> Vector3<f64> {
        self.rotation.row(2).transpose()
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let mut out = Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        if orthonormality_drift(&out.rotation) > DRIFT_REPAIR {
            out.rotation = reorthonormalize(&out.rotation);
        }
        out
    }

    /// Transform mapping `self`'s camera frame to `other`'s camera frame.
    pub fn relative_to(&self, other: &Self) -> Self {
        other.compose(&self.inverse())
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Row-major rotation followed by translation, the wire/file layout.
    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ]
    }

    pub fn from_row_major(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(&rotation),
            Vector3::from_column_slice(&translation),
        )
    }
}

pub fn compose(a: &CameraPose, b: &CameraPose) -> CameraPose {
    a.compose(b)
}

pub fn invert(a: &CameraPose) -> CameraPose {
    a.inverse()
}

/// Maps `a`'s camera frame into `b`'s.
pub fn relative(a: &CameraPose, b: &CameraPose) -> CameraPose {
    a.relative_to(b)
}

/// Largest entry of `RᵀR - I`.
pub fn orthonormality_drift(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).amax()
}

/// Nearest rotation in the Frobenius sense (polar factor).
pub fn reorthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        out = u * v_t;
    }
    out
}

/// Geodesic angle between two rotations, in radians.
///
/// Equal to `arccos((tr(AᵀB) − 1) / 2)`, evaluated with `atan2` so that it
/// stays accurate near 0 and π.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a.transpose() * b;
    let skew = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    (0.5 * skew.norm()).atan2(0.5 * (r.trace() - 1.0))
}
