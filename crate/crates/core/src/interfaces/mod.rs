//! Contracts for the neural stages, plus oracle and remote implementations.
//!
//! The pipeline talks to view completion, dense stereo and refinement only
//! through the traits here. [`SyntheticWorld`] backs ideal implementations of
//! all three for end-to-end testing.

mod oracle;
mod refiner;
mod remote;
pub mod wire;
mod world;

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap, Image, Plane};
use crate::trajectory::Trajectory;

pub use oracle::{oracle_completer, oracle_stereo, OracleCompleter, OracleStereo};
pub use refiner::{blur_refiner, identity_refiner, BlurRefiner, IdentityRefiner};
pub use remote::{remote_completer, RemoteCompleter, RetryPolicy};
pub use world::{SyntheticWorld, WorldParams};

/// Fills unobserved regions of a rendered video.
pub trait ViewCompleter: Send + Sync {
    /// `frames[i]` and `alphas[i]` were rendered at `trajectory.poses[i]`.
    fn complete(&self, frames: &[Image], alphas: &[Plane], trajectory: &Trajectory)
        -> Result<Vec<Image>>;
}

#[derive(Debug, Clone)]
pub struct StereoOutput {
    pub depths: Vec<DepthMap>,
    pub poses: Vec<CameraPose>,
}

/// Estimates per-view depth (up to a global scale) and camera poses.
pub trait DenseStereo: Send + Sync {
    /// `pose_hints` are the cameras the frames were planned at; estimators
    /// that solve for poses themselves may ignore them.
    fn estimate(
        &self,
        frames: &[Image],
        pose_hints: &[CameraPose],
        intrinsics: &CameraIntrinsics,
    ) -> Result<StereoOutput>;
}

/// Re-synthesizes detail in an image, `t` being the fraction of the noise
/// schedule to re-run.
pub trait ImageRefiner: Send + Sync {
    fn refine(&self, image: &Image, t: f64) -> Result<Image>;
}

/// Checks that a completer kept the frame count and sizes.
pub fn check_completion(inputs: &[Image], outputs: &[Image]) -> Result<()> {
    if inputs.len() != outputs.len() {
        return Err(Error::shape(format!(
            "completer returned {} frames for {} inputs",
            outputs.len(),
            inputs.len()
        )));
    }
    for (i, (a, b)) in inputs.iter().zip(outputs).enumerate() {
        if a.dims() != b.dims() {
            return Err(Error::shape(format!(
                "completed frame {i} is {}x{}, expected {}x{}",
                b.width, b.height, a.width, a.height
            )));
        }
        if b.has_non_finite() {
            return Err(Error::param(format!("completed frame {i} has non-finite pixels")));
        }
    }
    Ok(())
}

/// Checks that a stereo estimator returned one depth and pose per frame.
pub fn check_stereo(frames: &[Image], out: &StereoOutput) -> Result<()> {
    if out.depths.len() != frames.len() || out.poses.len() != frames.len() {
        return Err(Error::shape(format!(
            "stereo returned {} depths and {} poses for {} frames",
            out.depths.len(),
            out.poses.len(),
            frames.len()
        )));
    }
    for (i, (f, d)) in frames.iter().zip(&out.depths).enumerate() {
        if f.dims() != d.dims() {
            return Err(Error::shape(format!("stereo depth {i} does not match its frame")));
        }
    }
    Ok(())
}

pub(crate) fn check_video_inputs(frames: &[Image], alphas: &[Plane], trajectory: &Trajectory) -> Result<()> {
    let n = trajectory.len();
    if frames.len() != n || alphas.len() != n {
        return Err(Error::shape(format!(
            "{} frames and {} alpha maps for a {n}-pose trajectory",
            frames.len(),
            alphas.len()
        )));
    }
    let dims = trajectory.intrinsics.dims();
    for (i, (f, a)) in frames.iter().zip(alphas).enumerate() {
        if f.dims() != dims || a.dims() != dims {
            return Err(Error::shape(format!("frame {i} does not match the trajectory intrinsics")));
        }
    }
    Ok(())
}
