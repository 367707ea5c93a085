//! Gaussian scenes and the differentiable tile rasterizer.

mod project;
mod raster;
mod scene;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap, Image, Plane};

pub use project::{ParamGrad, ProjectionStats};
pub use scene::{
    logit, matrix_to_quat, normalize_quat, quat_norm, quat_to_matrix, sigmoid, Gaussian,
    GaussianScene, INIT_OPACITY, INIT_SCALE,
};

/// Rasterizer knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub background: [f64; 3],
    /// Screen-space variance (px²) added to every projected covariance.
    pub lowpass: f64,
    /// Gaussians with camera z at or below this are culled.
    pub near: f64,
    pub tile_size: usize,
    /// Compositing stops once transmittance falls below this.
    pub min_transmittance: f64,
    pub alpha_max: f64,
    /// Half-extent of the screen-space footprint in standard deviations.
    pub sigma_bound: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            background: [0.0; 3],
            lowpass: 0.8,
            near: 0.01,
            tile_size: 16,
            min_transmittance: 1e-4,
            alpha_max: 0.999,
            sigma_bound: 3.0,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.background.iter().all(|c| c.is_finite())
            && self.lowpass.is_finite()
            && self.lowpass >= 0.0
            && self.near > 0.0
            && self.tile_size > 0
            && (0.0..1.0).contains(&self.min_transmittance)
            && self.alpha_max > 0.0
            && self.alpha_max < 1.0
            && self.sigma_bound > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::param(format!("invalid render settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Image,
    /// Alpha-normalized expected depth; valid where alpha > 0.
    pub depth: DepthMap,
    pub alpha: Plane,
    pub stats: ProjectionStats,
}

/// Forward-pass state needed by [`render_backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    fingerprint: u64,
    intrinsics: CameraIntrinsics,
    pose: CameraPose,
    settings: RenderSettings,
    frame: raster::Frame,
}

/// Upstream gradients of a loss with respect to the render outputs.
#[derive(Debug, Clone, Copy)]
pub struct OutputGrads<'a> {
    pub color: &'a Image,
    pub depth: Option<&'a Plane>,
    pub alpha: Option<&'a Plane>,
}

impl<'a> OutputGrads<'a> {
    pub fn color(color: &'a Image) -> Self {
        Self {
            color,
            depth: None,
            alpha: None,
        }
    }
}

/// Per-Gaussian parameter gradients from one view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneGradients {
    pub params: Vec<ParamGrad>,
    /// Gradient w.r.t. the projected center, in pixels.
    pub mean2d: Vec<[f64; 2]>,
    /// Whether the Gaussian survived culling in this view.
    pub visible: Vec<bool>,
}

impl SceneGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            params: vec![ParamGrad::default(); n],
            mean2d: vec![[0.0; 2]; n],
            visible: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

pub fn render(scene: &GaussianScene, k: &CameraIntrinsics, e: &CameraPose) -> Result<RenderOutput> {
    render_with(scene, k, e, &RenderSettings::default())
}

pub fn render_with(
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    e: &CameraPose,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    Ok(render_cached(scene, k, e, settings)?.0)
}

/// Renders and keeps what the backward pass needs.
pub fn render_cached(
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    e: &CameraPose,
    settings: &RenderSettings,
) -> Result<(RenderOutput, ForwardCache)> {
    k.validate()?;
    settings.validate()?;
    let (frame, out) = raster::forward(scene, k, e, settings);
    let cache = ForwardCache {
        fingerprint: scene.fingerprint(),
        intrinsics: *k,
        pose: *e,
        settings: *settings,
        frame,
    };
    Ok((out, cache))
}

/// Exact gradients of the forward pass recorded in `cache`.
pub fn render_backward(
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    e: &CameraPose,
    cache: &ForwardCache,
    grads: OutputGrads<'_>,
) -> Result<SceneGradients> {
    if cache.fingerprint != scene.fingerprint()
        || cache.intrinsics != *k
        || cache.pose != *e
    {
        return Err(Error::Invariant(
            "forward cache does not match the scene or camera".into(),
        ));
    }
    let dims = (k.width, k.height);
    crate::error::ensure_same_dims("color gradient", grads.color.dims(), dims)?;
    if let Some(g) = grads.depth {
        crate::error::ensure_same_dims("depth gradient", g.dims(), dims)?;
    }
    if let Some(g) = grads.alpha {
        crate::error::ensure_same_dims("alpha gradient", g.dims(), dims)?;
    }
    Ok(raster::backward(scene, k, e, &cache.settings, &cache.frame, grads))
}

#[cfg(test)]
mod tests;
