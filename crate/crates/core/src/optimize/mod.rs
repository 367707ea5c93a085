//! Losses, Adam, densification and multi-view fitting.

mod adam;
mod densify;
mod fit;
mod loss;

pub use adam::{adam_step, AdamState, OptimSettings, PARAMS_PER_GAUSSIAN};
pub use densify::{
    densify_and_prune, Densified, DensifyStats, GradAccumulator, SPLIT_CHILDREN,
    SPLIT_SCALE_DIVISOR,
};
pub use fit::{evaluate_loss, fit, scene_extent, FitOptions, FitReport, TrainView};
pub use loss::{
    combined_loss, l1_loss, ssim, ssim_loss, ssim_map, LossEval, LossWeights, PerceptualLoss,
    PerceptualRegistry, LPIPS_WEIGHT_WITH_NETWORK, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW,
};
