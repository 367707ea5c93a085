use crate::error::{Error, Result};
use crate::geometry::{backproject, BinaryMask, Image, Plane};
use crate::splat::{GaussianScene, RenderSettings};
use crate::trajectory::Trajectory;

use super::render_video;

/// An incomplete video and the full-scene video it should complete to.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub ground_truth: Vec<Image>,
    pub incomplete: Vec<Image>,
    /// Coverage of each incomplete frame.
    pub alphas: Vec<Plane>,
}

/// Lifts the start frame of `trajectory` into a partial scene and renders it
/// along the whole path, next to renders of the full scene.
pub fn make_training_pair(
    world: &GaussianScene,
    trajectory: &Trajectory,
    start_frame: usize,
    settings: &RenderSettings,
) -> Result<TrainingPair> {
    if start_frame >= trajectory.len() {
        return Err(Error::param(format!(
            "start frame {start_frame} out of range for {} poses",
            trajectory.len()
        )));
    }
    let k = &trajectory.intrinsics;
    let pose = &trajectory.poses[start_frame];
    let first = crate::splat::render_with(world, k, pose, settings)?;
    let mask = BinaryMask::from_values(
        k.width,
        k.height,
        first.depth.validity().to_vec(),
    )?;
    let cloud = backproject(&first.depth, &mask, &first.color, k, pose)?;
    let partial = GaussianScene::from_point_cloud(&cloud);
    let (ground_truth, _) = render_video(world, trajectory, settings)?;
    let (incomplete, alphas) = render_video(&partial, trajectory, settings)?;
    Ok(TrainingPair {
        ground_truth,
        incomplete,
        alphas,
    })
}
