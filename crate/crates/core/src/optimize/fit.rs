use rand::seq::SliceRandom;
use serde::Serialize;

use super::adam::{adam_step, AdamState, OptimSettings};
use super::densify::{densify_and_prune, DensifyStats, GradAccumulator};
use super::loss::{combined_loss, LossWeights, PerceptualLoss};
use crate::error::{ensure_same_dims, Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, Image};
use crate::rng::{stream, streams};
use crate::splat::{render_backward, render_cached, render_with, GaussianScene, OutputGrads, RenderSettings};

/// A supervision image and the camera it was taken from.
#[derive(Debug, Clone)]
pub struct TrainView {
    pub pose: CameraPose,
    pub target: Image,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub iterations: usize,
    pub optim: OptimSettings,
    pub loss: LossWeights,
    pub render: RenderSettings,
    pub seed: u64,
    /// Iterations per entry of [`FitReport::window_losses`].
    pub window: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iterations: 1000,
            optim: OptimSettings::default(),
            loss: LossWeights::default(),
            render: RenderSettings::default(),
            seed: 0,
            window: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitReport {
    pub iterations: usize,
    pub gaussians_before: usize,
    pub gaussians_after: usize,
    /// Mean training loss per window of iterations.
    pub window_losses: Vec<f64>,
    /// Mean loss over all views after the last step.
    pub final_loss: f64,
    pub densify: DensifyStats,
    pub nan_skipped: u64,
}

/// Radius used to tell small Gaussians (cloned) from large ones (split).
pub fn scene_extent(scene: &GaussianScene, poses: &[CameraPose]) -> f64 {
    if poses.is_empty() {
        return 1.0;
    }
    let centers: Vec<_> = poses.iter().map(|p| p.center()).collect();
    let mid = centers.iter().sum::<nalgebra::Vector3<f64>>() / centers.len() as f64;
    let cam_radius = centers.iter().map(|c| (c - mid).norm()).fold(0.0, f64::max);
    let mut dists: Vec<f64> = (0..scene.len()).map(|i| (scene.center(i) - mid).norm()).collect();
    let scene_radius = crate::geometry::median(&mut dists).unwrap_or(1.0);
    1.1 * cam_radius.max(scene_radius)
}

/// Mean combined loss of the current scene over `views`.
pub fn evaluate_loss(
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    views: &[TrainView],
    weights: &LossWeights,
    settings: &RenderSettings,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<f64> {
    if views.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for v in views {
        let out = render_with(scene, k, &v.pose, settings)?;
        total += combined_loss(&out.color, &v.target, weights, perceptual)?.0;
    }
    Ok(total / views.len() as f64)
}

/// Optimizes `scene` against `views`, one view per iteration in a seeded
/// shuffled order, with periodic densification.
pub fn fit(
    scene: &mut GaussianScene,
    k: &CameraIntrinsics,
    views: &[TrainView],
    opts: &FitOptions,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<FitReport> {
    opts.optim.validate("optim")?;
    opts.loss.validate("loss")?;
    if opts.window == 0 {
        return Err(Error::param("fit window must be positive"));
    }
    for v in views {
        ensure_same_dims("training view", v.target.dims(), k.dims())?;
    }
    let mut report = FitReport {
        gaussians_before: scene.len(),
        ..Default::default()
    };
    if views.is_empty() || opts.iterations == 0 {
        report.gaussians_after = scene.len();
        report.final_loss =
            evaluate_loss(scene, k, views, &opts.loss, &opts.render, perceptual)?;
        return Ok(report);
    }
    let poses: Vec<_> = views.iter().map(|v| v.pose).collect();
    let extent = scene_extent(scene, &poses);
    let mut order_rng = stream(opts.seed, streams::VIEW_ORDER);
    let mut split_rng = stream(opts.seed, streams::SPLIT);
    let mut state = AdamState::new(scene.len());
    let mut acc = GradAccumulator::new(scene.len());
    let mut order: Vec<usize> = Vec::new();
    let mut window_sum = 0.0;
    let mut window_n = 0;

    for it in 1..=opts.iterations {
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut order_rng);
            order.reverse();
        }
        let v = &views[order.pop().unwrap()];
        let (out, cache) = render_cached(scene, k, &v.pose, &opts.render)?;
        let (loss, grad) = combined_loss(&out.color, &v.target, &opts.loss, perceptual)?;
        let g = render_backward(scene, k, &v.pose, &cache, OutputGrads::color(&grad))?;
        acc.add(&g, k.width, k.height);
        adam_step(scene, &g.params, &opts.optim, &mut state)?;
        window_sum += loss;
        window_n += 1;
        if window_n == opts.window || it == opts.iterations {
            report.window_losses.push(window_sum / window_n as f64);
            window_sum = 0.0;
            window_n = 0;
        }
        if opts.optim.densify
            && it % opts.optim.densify_interval == 0
            && it < opts.optim.densify_until
            && it < opts.iterations
        {
            let d = densify_and_prune(scene, &acc, &opts.optim, extent, &mut split_rng)?;
            report.densify.cloned += d.stats.cloned;
            report.densify.split += d.stats.split;
            report.densify.pruned += d.stats.pruned;
            state.remap(&d.origin);
            *scene = d.scene;
            acc = GradAccumulator::new(scene.len());
        }
    }
    report.iterations = opts.iterations;
    report.nan_skipped = state.nan_skipped;
    report.gaussians_after = scene.len();
    report.final_loss = evaluate_loss(scene, k, views, &opts.loss, &opts.render, perceptual)?;
    Ok(report)
}
