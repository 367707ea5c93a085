use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;

/// Isotropic world-space scale given to Gaussians seeded from points.
pub const INIT_SCALE: f64 = 3e-4;
/// Opacity given to Gaussians seeded from points.
pub const INIT_OPACITY: f64 = 0.8;

/// Anisotropic 3D Gaussians stored in their unconstrained parameterization.
///
/// Opacity is stored as a logit and scale as a natural log; colors are plain
/// RGB. Rotations are `(w, x, y, z)` quaternions, unit-norm between
/// optimizer steps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianScene {
    pub centers: Vec<[f64; 3]>,
    pub colors: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
}

/// One Gaussian in constrained form, for construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub center: [f64; 3],
    pub color: [f64; 3],
    pub opacity: f64,
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GaussianScene {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            centers: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
            opacity_logits: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
        }
    }

    /// One Gaussian per point, no downsampling.
    pub fn from_point_cloud(pc: &PointCloud) -> Self {
        let mut scene = Self::with_capacity(pc.len());
        for (p, c) in pc.positions.iter().zip(&pc.colors) {
            scene.push(Gaussian {
                center: [p.x, p.y, p.z],
                color: *c,
                opacity: INIT_OPACITY,
                scale: [INIT_SCALE; 3],
                rotation: [1.0, 0.0, 0.0, 0.0],
            });
        }
        scene
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn push(&mut self, g: Gaussian) {
        self.centers.push(g.center);
        self.colors.push(g.color);
        self.opacity_logits.push(logit(g.opacity));
        self.log_scales.push(g.scale.map(f64::ln));
        self.rotations.push(g.rotation);
    }

    pub fn push_raw(&mut self, other: &GaussianScene, i: usize) {
        self.centers.push(other.centers[i]);
        self.colors.push(other.colors[i]);
        self.opacity_logits.push(other.opacity_logits[i]);
        self.log_scales.push(other.log_scales[i]);
        self.rotations.push(other.rotations[i]);
    }

    pub fn append(&mut self, other: &GaussianScene) {
        self.centers.extend_from_slice(&other.centers);
        self.colors.extend_from_slice(&other.colors);
        self.opacity_logits.extend_from_slice(&other.opacity_logits);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.rotations.extend_from_slice(&other.rotations);
    }

    /// Keeps Gaussians whose flag is true, preserving order.
    pub fn retain_by(&mut self, keep: &[bool]) {
        fn filter<T: Copy>(v: &mut Vec<T>, keep: &[bool]) {
            let mut it = keep.iter();
            v.retain(|_| *it.next().unwrap());
        }
        filter(&mut self.centers, keep);
        filter(&mut self.colors, keep);
        filter(&mut self.opacity_logits, keep);
        filter(&mut self.log_scales, keep);
        filter(&mut self.rotations, keep);
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn scale(&self, i: usize) -> [f64; 3] {
        self.log_scales[i].map(f64::exp)
    }

    pub fn center(&self, i: usize) -> Vector3<f64> {
        Vector3::from(self.centers[i])
    }

    pub fn rotation_matrix(&self, i: usize) -> Matrix3<f64> {
        quat_to_matrix(&normalize_quat(self.rotations[i]))
    }

    /// World-space covariance `R · diag(s²) · Rᵀ`.
    pub fn covariance(&self, i: usize) -> Matrix3<f64> {
        let r = self.rotation_matrix(i);
        let s = self.scale(i);
        let m = r * Matrix3::from_diagonal(&Vector3::from(s));
        m * m.transpose()
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.centers.iter().map(|c| Vector3::from(*c)).sum();
        Some(sum / self.len() as f64)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.centers.len();
        if [
            self.colors.len(),
            self.opacity_logits.len(),
            self.log_scales.len(),
            self.rotations.len(),
        ]
        .iter()
        .any(|l| *l != n)
        {
            return Err(Error::Invariant("scene parameter arrays differ in length".into()));
        }
        for i in 0..n {
            let finite = self.centers[i].iter().all(|v| v.is_finite())
                && self.colors[i].iter().all(|v| v.is_finite())
                && self.opacity_logits[i].is_finite()
                && self.log_scales[i].iter().all(|v| v.is_finite())
                && self.rotations[i].iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::Invariant(format!("Gaussian {i} has non-finite parameters")));
            }
            let o = self.opacity(i);
            if !(o > 0.0 && o < 1.0) {
                return Err(Error::Invariant(format!("Gaussian {i} opacity {o} outside (0, 1)")));
            }
            let qn = quat_norm(&self.rotations[i]);
            if (qn - 1.0).abs() > 1e-6 {
                return Err(Error::Invariant(format!("Gaussian {i} quaternion norm {qn}")));
            }
        }
        Ok(())
    }

    /// Order-sensitive digest of every parameter bit.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ self.len() as u64;
        let mut mix = |v: f64| {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3).rotate_left(29);
        };
        for i in 0..self.len() {
            self.centers[i].iter().for_each(|v| mix(*v));
            self.colors[i].iter().for_each(|v| mix(*v));
            mix(self.opacity_logits[i]);
            self.log_scales[i].iter().for_each(|v| mix(*v));
            self.rotations[i].iter().for_each(|v| mix(*v));
        }
        h
    }
}

pub fn quat_norm(q: &[f64; 4]) -> f64 {
    q.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = quat_norm(&q);
    if n < 1e-300 {
        return [1.0, 0.0, 0.0, 0.0];
    }
    q.map(|v| v / n)
}

/// Rotation matrix of a unit `(w, x, y, z)` quaternion.
pub fn quat_to_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn matrix_to_quat(r: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_quaternion(
        *UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(*r))
            .quaternion(),
    );
    let Quaternion { coords } = *q.quaternion();
    [coords.w, coords.x, coords.y, coords.z]
}
