use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::adam::OptimSettings;
use crate::error::{Error, Result};
use crate::splat::{GaussianScene, SceneGradients};

/// Children of a split shrink by this factor.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;
pub const SPLIT_CHILDREN: usize = 2;

/// Running sum of per-view screen-space positional gradient norms.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradAccumulator {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    /// Adds one view. Pixel gradients are converted to NDC units.
    pub fn add(&mut self, grads: &SceneGradients, width: usize, height: usize) {
        let (sx, sy) = (0.5 * width as f64, 0.5 * height as f64);
        for i in 0..self.sum.len().min(grads.len()) {
            if grads.visible[i] {
                let [gx, gy] = grads.mean2d[i];
                self.sum[i] += (gx * sx).hypot(gy * sy);
                self.count[i] += 1;
            }
        }
    }

    pub fn average(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DensifyStats {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Result of restructuring: the new scene and, per new Gaussian, the index it
/// inherited optimizer state from.
#[derive(Debug, Clone)]
pub struct Densified {
    pub scene: GaussianScene,
    pub origin: Vec<Option<usize>>,
    pub stats: DensifyStats,
}

/// Clones small and splits large high-gradient Gaussians, then prunes
/// near-transparent ones. Opacities are never reset.
pub fn densify_and_prune<R: Rng>(
    scene: &GaussianScene,
    acc: &GradAccumulator,
    settings: &OptimSettings,
    extent: f64,
    rng: &mut R,
) -> Result<Densified> {
    let n = scene.len();
    if acc.len() != n {
        return Err(Error::shape(format!(
            "gradient accumulator has {} entries for {n} Gaussians",
            acc.len()
        )));
    }
    let mut stats = DensifyStats::default();
    let mut keep = vec![true; n];
    let mut extra = GaussianScene::new();
    let mut extra_origin = Vec::new();
    for i in 0..n {
        if acc.average(i) < settings.split_grad_threshold {
            continue;
        }
        let s = scene.scale(i);
        let max_s = s.iter().cloned().fold(0.0, f64::max);
        if max_s <= settings.percent_dense * extent {
            extra.push_raw(scene, i);
            extra_origin.push(None);
            stats.cloned += 1;
        } else {
            let r = scene.rotation_matrix(i);
            let c = scene.center(i);
            for _ in 0..SPLIT_CHILDREN {
                let z = Vector3::new(
                    rng.sample::<f64, _>(StandardNormal) * s[0],
                    rng.sample::<f64, _>(StandardNormal) * s[1],
                    rng.sample::<f64, _>(StandardNormal) * s[2],
                );
                let p = c + r * z;
                extra.push_raw(scene, i);
                let last = extra.len() - 1;
                extra.centers[last] = [p.x, p.y, p.z];
                extra.log_scales[last] = scene.log_scales[i].map(|l| l - SPLIT_SCALE_DIVISOR.ln());
                extra_origin.push(None);
            }
            keep[i] = false;
            stats.split += 1;
        }
    }

    let mut out = GaussianScene::with_capacity(n + extra.len());
    let mut origin = Vec::with_capacity(n + extra.len());
    for i in 0..n {
        if keep[i] {
            out.push_raw(scene, i);
            origin.push(Some(i));
        }
    }
    out.append(&extra);
    origin.extend(extra_origin);

    let alive: Vec<bool> = (0..out.len())
        .map(|i| out.opacity(i) >= settings.prune_opacity_threshold)
        .collect();
    stats.pruned = alive.iter().filter(|a| !**a).count();
    if stats.pruned > 0 {
        out.retain_by(&alive);
        let mut it = alive.iter();
        origin.retain(|_| *it.next().unwrap());
    }
    Ok(Densified {
        scene: out,
        origin,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, streams};
    use crate::splat::{logit, Gaussian};

    fn scene(opacities: &[f64], scale: f64) -> GaussianScene {
        let mut s = GaussianScene::new();
        for (i, o) in opacities.iter().enumerate() {
            s.push(Gaussian {
                center: [i as f64, 0.0, 3.0],
                color: [0.5; 3],
                opacity: *o,
                scale: [scale, scale * 0.5, scale * 0.7],
                rotation: [1.0, 0.0, 0.0, 0.0],
            });
        }
        s
    }

    fn acc_with(values: &[f64]) -> GradAccumulator {
        GradAccumulator {
            sum: values.to_vec(),
            count: vec![1; values.len()],
        }
    }

    #[test]
    fn quiet_scene_is_unchanged() {
        let s = scene(&[0.5, 0.7, 0.9], 0.1);
        let d = densify_and_prune(
            &s,
            &acc_with(&[0.0, 1e-5, 1e-4]),
            &OptimSettings::default(),
            1.0,
            &mut stream(1, streams::SPLIT),
        )
        .unwrap();
        assert_eq!(d.scene, s);
        assert_eq!(d.stats, DensifyStats::default());
        assert_eq!(d.origin, vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn large_high_gradient_gaussian_is_split() {
        let s = scene(&[0.5, 0.6], 0.2);
        let d = densify_and_prune(
            &s,
            &acc_with(&[1e-3, 0.0]),
            &OptimSettings::default(),
            1.0,
            &mut stream(1, streams::SPLIT),
        )
        .unwrap();
        assert_eq!(d.scene.len(), 3);
        assert_eq!(d.stats.split, 1);
        assert_eq!(d.origin, vec![Some(1), None, None]);
        let parent_mean: f64 = s.scale(0).iter().sum::<f64>() / 3.0;
        for child in 1..3 {
            let m: f64 = d.scene.scale(child).iter().sum::<f64>() / 3.0;
            assert!(m < parent_mean);
            assert!((m * 1.6 - parent_mean).abs() < 1e-12);
            assert_eq!(d.scene.opacity_logits[child], s.opacity_logits[0]);
        }
        d.scene.validate().unwrap();
    }

    #[test]
    fn small_high_gradient_gaussian_is_cloned() {
        let s = scene(&[0.5], 0.001);
        let d = densify_and_prune(
            &s,
            &acc_with(&[1e-3]),
            &OptimSettings::default(),
            1.0,
            &mut stream(1, streams::SPLIT),
        )
        .unwrap();
        assert_eq!(d.scene.len(), 2);
        assert_eq!(d.stats.cloned, 1);
        assert_eq!(d.scene.centers[0], d.scene.centers[1]);
    }

    #[test]
    fn transparent_gaussian_is_pruned() {
        let mut s = scene(&[0.5, 0.5], 0.1);
        s.opacity_logits[1] = logit(1e-4);
        let d = densify_and_prune(
            &s,
            &acc_with(&[0.0, 0.0]),
            &OptimSettings::default(),
            1.0,
            &mut stream(1, streams::SPLIT),
        )
        .unwrap();
        assert_eq!(d.scene.len(), 1);
        assert_eq!(d.stats.pruned, 1);
        assert_eq!(d.origin, vec![Some(0)]);
    }

    #[test]
    fn misaligned_accumulator_is_rejected() {
        let s = scene(&[0.5], 0.1);
        assert!(densify_and_prune(
            &s,
            &acc_with(&[]),
            &OptimSettings::default(),
            1.0,
            &mut stream(1, streams::SPLIT)
        )
        .is_err());
    }
}
