use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{check_video_inputs, DenseStereo, StereoOutput, SyntheticWorld, ViewCompleter};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, Image, Plane};
use crate::rng::{stream, streams};
use crate::trajectory::Trajectory;

/// Renders the ground-truth world along the trajectory, ignoring its input.
#[derive(Debug, Clone)]
pub struct OracleCompleter {
    world: Arc<SyntheticWorld>,
}

pub fn oracle_completer(world: Arc<SyntheticWorld>) -> OracleCompleter {
    OracleCompleter { world }
}

impl ViewCompleter for OracleCompleter {
    fn complete(&self, frames: &[Image], alphas: &[Plane], trajectory: &Trajectory) -> Result<Vec<Image>> {
        check_video_inputs(frames, alphas, trajectory)?;
        trajectory
            .poses
            .par_iter()
            .map(|p| Ok(self.world.render_with(&trajectory.intrinsics, p)?.color))
            .collect()
    }
}

/// Ground-truth depths and poses, optionally corrupted by a global scale and
/// additive Gaussian depth noise.
#[derive(Debug, Clone)]
pub struct OracleStereo {
    world: Arc<SyntheticWorld>,
    pub scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

pub fn oracle_stereo(world: Arc<SyntheticWorld>) -> OracleStereo {
    OracleStereo {
        world,
        scale: 1.0,
        noise_sigma: 0.0,
        seed: 0,
    }
}

impl OracleStereo {
    pub fn with_scale(mut self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::param(format!("stereo scale corruption must be positive, got {s}")));
        }
        self.scale = s;
        Ok(self)
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::param(format!("noise sigma must be >= 0, got {sigma}")));
        }
        self.noise_sigma = sigma;
        self.seed = seed;
        Ok(self)
    }
}

impl DenseStereo for OracleStereo {
    fn estimate(
        &self,
        frames: &[Image],
        pose_hints: &[CameraPose],
        intrinsics: &CameraIntrinsics,
    ) -> Result<StereoOutput> {
        if frames.len() != pose_hints.len() {
            return Err(Error::shape(format!(
                "{} frames but {} pose hints",
                frames.len(),
                pose_hints.len()
            )));
        }
        let mut depths = Vec::with_capacity(frames.len());
        for (i, (f, pose)) in frames.iter().zip(pose_hints).enumerate() {
            if f.dims() != intrinsics.dims() {
                return Err(Error::shape(format!("stereo frame {i} does not match intrinsics")));
            }
            let mut d = self.world.render_with(intrinsics, pose)?.depth;
            if self.scale != 1.0 {
                d = d.scaled(self.scale);
            }
            if self.noise_sigma > 0.0 {
                let mut rng = stream(self.seed ^ i as u64, streams::STEREO_NOISE);
                for p in 0..d.len() {
                    if d.is_valid(p) {
                        let n: f64 = rng.sample(StandardNormal);
                        let v = d.values()[p] + self.noise_sigma * n;
                        d.set(p, Some(v.max(1e-6)));
                    }
                }
            }
            depths.push(d);
        }
        Ok(StereoOutput {
            depths,
            poses: pose_hints.to_vec(),
        })
    }
}
