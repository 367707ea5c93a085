//! Per-Gaussian EWA projection to screen space and its adjoint.
//!
//! Σ = R diag(s²) Rᵀ, Σ_cam = W Σ Wᵀ, Σ₂d = J Σ_cam Jᵀ + λI with J the
//! perspective Jacobian at the camera-space center and λ a fixed screen-space
//! low-pass variance.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};

use super::scene::{normalize_quat, quat_norm, quat_to_matrix, sigmoid, GaussianScene};
use super::RenderSettings;
use crate::geometry::{CameraIntrinsics, CameraPose};

/// Screen-space footprint of one Gaussian.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Splat {
    pub index: u32,
    pub mean: [f64; 2],
    /// Inverse 2D covariance `[a, b, c]` for `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    /// Inclusive pixel rectangle `[u0, u1] × [v0, v1]` of the 3σ bound.
    pub rect: [u32; 4],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct ProjectionStats {
    pub visible: usize,
    pub behind_camera: usize,
    pub off_screen: usize,
    pub degenerate: usize,
}

pub(crate) enum Projected {
    Visible(Splat),
    Behind,
    OffScreen,
    Degenerate,
}

/// Tangent bounds beyond which the Jacobian is evaluated on the bound, as a
/// multiple of the image half-extent.
const JACOBIAN_GUARD: f64 = 1.3;

/// Perspective Jacobian at `t`, with `x/z` and `y/z` clamped to a guard band
/// around the image. Also reports which axes were clamped and the clamped
/// tangents.
fn perspective_jacobian(k: &CameraIntrinsics, t: &Vector3<f64>) -> (Matrix2x3<f64>, [bool; 2], [f64; 2]) {
    let iz = 1.0 / t.z;
    let lim_x = JACOBIAN_GUARD * 0.5 * k.width as f64 / k.fx.abs();
    let lim_y = JACOBIAN_GUARD * 0.5 * k.height as f64 / k.fy.abs();
    let (ux, uy) = (t.x * iz, t.y * iz);
    let tan = [ux.clamp(-lim_x, lim_x), uy.clamp(-lim_y, lim_y)];
    let clamped = [tan[0] != ux, tan[1] != uy];
    let j = Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * tan[0] * iz,
        0.0,
        k.fy * iz,
        -k.fy * tan[1] * iz,
    );
    (j, clamped, tan)
}

pub(crate) fn project_one(
    scene: &GaussianScene,
    i: usize,
    k: &CameraIntrinsics,
    e: &CameraPose,
    settings: &RenderSettings,
) -> Projected {
    let t = e.transform_point(&scene.center(i));
    if t.z <= settings.near {
        return Projected::Behind;
    }
    let (j, ..) = perspective_jacobian(k, &t);
    let u = k.fx * t.x / t.z + k.cx;
    let v = k.fy * t.y / t.z + k.cy;
    let (w, h) = (k.width as f64, k.height as f64);
    // Cheap bound first: Σ₂d's diagonal is at most |J row|² · max(s)² + λ.
    let s_max = scene.log_scales[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
    let s2 = s_max * s_max;
    let bx = settings.sigma_bound * ((j[(0, 0)].powi(2) + j[(0, 2)].powi(2)) * s2 + settings.lowpass).sqrt();
    let by = settings.sigma_bound * ((j[(1, 1)].powi(2) + j[(1, 2)].powi(2)) * s2 + settings.lowpass).sqrt();
    if u + bx < 0.0 || u - bx > w - 1.0 || v + by < 0.0 || v - by > h - 1.0 {
        return Projected::OffScreen;
    }
    let sigma_cam = e.rotation * scene.covariance(i) * e.rotation.transpose();
    let cov: Matrix2<f64> = j * sigma_cam * j.transpose()
        + Matrix2::identity() * settings.lowpass;
    let (sxx, sxy, syy) = (cov[(0, 0)], 0.5 * (cov[(0, 1)] + cov[(1, 0)]), cov[(1, 1)]);
    let det = sxx * syy - sxy * sxy;
    if !(det >= 1e-12) || !det.is_finite() {
        return Projected::Degenerate;
    }
    let conic = [syy / det, -sxy / det, sxx / det];
    let ex = settings.sigma_bound * sxx.sqrt();
    let ey = settings.sigma_bound * syy.sqrt();
    let u0 = (u - ex).ceil().max(0.0);
    let u1 = (u + ex).floor().min(w - 1.0);
    let v0 = (v - ey).ceil().max(0.0);
    let v1 = (v + ey).floor().min(h - 1.0);
    if !(u0 <= u1 && v0 <= v1) {
        return Projected::OffScreen;
    }
    Projected::Visible(Splat {
        index: i as u32,
        mean: [u, v],
        conic,
        depth: t.z,
        opacity: scene.opacity(i),
        color: scene.colors[i],
        rect: [u0 as u32, u1 as u32, v0 as u32, v1 as u32],
    })
}

/// Screen-space gradients accumulated by the rasterizer for one Gaussian.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct SplatGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
}

impl SplatGrad {
    pub fn add(&mut self, o: &SplatGrad) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
        self.depth += o.depth;
    }
}

/// Gradients with respect to one Gaussian's stored parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ParamGrad {
    pub center: [f64; 3],
    pub color: [f64; 3],
    pub opacity_logit: f64,
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
}

/// Derivatives of the rotation matrix of a unit quaternion w.r.t. (w, x, y, z).
fn quat_matrix_partials(q: &[f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = *q;
    let two = 2.0;
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * two,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * two,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * two,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * two,
    ]
}

/// Chains screen-space gradients back to the stored parameters.
pub(crate) fn project_backward(
    scene: &GaussianScene,
    i: usize,
    k: &CameraIntrinsics,
    e: &CameraPose,
    settings: &RenderSettings,
    g: &SplatGrad,
) -> ParamGrad {
    let w_cam = e.rotation;
    let t = e.transform_point(&scene.center(i));
    let z = t.z;
    let (j, clamped, tan) = perspective_jacobian(k, &t);

    let q_raw = scene.rotations[i];
    let q = normalize_quat(q_raw);
    let rq = quat_to_matrix(&q);
    let s = Vector3::from(scene.scale(i));
    let m = rq * Matrix3::from_diagonal(&s);
    let sigma_cam = w_cam * (m * m.transpose()) * w_cam.transpose();

    // Mean and depth.
    let mut gt: Vector3<f64> = j.transpose() * Vector2::new(g.mean[0], g.mean[1]);
    gt.z += g.depth;

    // conic = Σ₂d⁻¹  =>  dL/dΣ₂d = -conic · G · conic, with the off-diagonal
    // conic parameter shared by both symmetric entries.
    let c = g.conic;
    let cov = j * sigma_cam * j.transpose() + Matrix2::identity() * settings.lowpass;
    let sxy = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    let cov = Matrix2::new(cov[(0, 0)], sxy, sxy, cov[(1, 1)]);
    let det = cov[(0, 0)] * cov[(1, 1)] - sxy * sxy;
    let conic = Matrix2::new(cov[(1, 1)], -sxy, -sxy, cov[(0, 0)]) / det;
    let g_conic = Matrix2::new(c[0], 0.5 * c[1], 0.5 * c[1], c[2]);
    let g_cov: Matrix2<f64> = -(conic * g_conic * conic);

    // Σ₂d = J Σ_cam Jᵀ.
    let g_sigma_cam: Matrix3<f64> = j.transpose() * g_cov * j;
    let g_j: Matrix2x3<f64> = 2.0 * g_cov * j * sigma_cam;
    let (fx, fy) = (k.fx, k.fy);
    let iz2 = 1.0 / (z * z);
    gt.z += g_j[(0, 0)] * (-fx * iz2) + g_j[(1, 1)] * (-fy * iz2);
    // J₀₂ = -f·tan/z with tan = x/z unless clamped to a constant.
    for (axis, f) in [(0, fx), (1, fy)] {
        if clamped[axis] {
            gt.z += g_j[(axis, 2)] * (f * tan[axis] * iz2);
        } else {
            gt[axis] += g_j[(axis, 2)] * (-f * iz2);
            gt.z += g_j[(axis, 2)] * (2.0 * f * tan[axis] * iz2);
        }
    }

    // Σ_cam = W Σ Wᵀ, Σ = M Mᵀ, M = R_q diag(s).
    let g_sigma = w_cam.transpose() * g_sigma_cam * w_cam;
    let g_m = 2.0 * g_sigma * m;
    let mut log_scale = [0.0; 3];
    let mut g_r = Matrix3::zeros();
    for col in 0..3 {
        let gs: f64 = (0..3).map(|r| g_m[(r, col)] * rq[(r, col)]).sum();
        log_scale[col] = gs * s[col];
        for r in 0..3 {
            g_r[(r, col)] = g_m[(r, col)] * s[col];
        }
    }
    let partials = quat_matrix_partials(&q);
    let g_qhat: [f64; 4] = std::array::from_fn(|c| g_r.component_mul(&partials[c]).sum());
    let dot: f64 = (0..4).map(|c| g_qhat[c] * q[c]).sum();
    let qn = quat_norm(&q_raw).max(1e-300);
    let rotation = std::array::from_fn(|c| (g_qhat[c] - q[c] * dot) / qn);

    let g_center = w_cam.transpose() * gt;
    let o = sigmoid(scene.opacity_logits[i]);
    ParamGrad {
        center: [g_center.x, g_center.y, g_center.z],
        color: g.color,
        opacity_logit: g.opacity * o * (1.0 - o),
        log_scale,
        rotation,
    }
}
