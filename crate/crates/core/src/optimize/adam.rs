use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::splat::{normalize_quat, GaussianScene, ParamGrad};

/// Parameters per Gaussian in optimizer order: center, color, opacity logit,
/// log scale, rotation.
pub const PARAMS_PER_GAUSSIAN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSettings {
    pub lr_position: f64,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub densify: bool,
    pub densify_interval: usize,
    /// No densification at or after this iteration.
    pub densify_until: usize,
    pub prune_opacity_threshold: f64,
    /// Threshold on the view-averaged NDC-space positional gradient norm.
    pub split_grad_threshold: f64,
    /// Gaussians whose largest scale exceeds this fraction of the scene
    /// extent are split instead of cloned.
    pub percent_dense: f64,
}

impl Default for OptimSettings {
    fn default() -> Self {
        Self {
            lr_position: 1e-5,
            lr_color: 5e-3,
            lr_opacity: 5e-2,
            lr_scale: 5e-4,
            lr_rotation: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            densify: true,
            densify_interval: 100,
            densify_until: usize::MAX,
            prune_opacity_threshold: 5e-3,
            split_grad_threshold: 2e-4,
            percent_dense: 0.01,
        }
    }
}

impl OptimSettings {
    pub fn validate(&self, path: &str) -> Result<()> {
        let lrs = [
            ("lr_position", self.lr_position),
            ("lr_color", self.lr_color),
            ("lr_opacity", self.lr_opacity),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
        ];
        for (name, v) in lrs {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{path}.{name}"), format!("must be > 0, got {v}")));
            }
        }
        let checks = [
            ("beta1", (0.0..1.0).contains(&self.beta1)),
            ("beta2", (0.0..1.0).contains(&self.beta2)),
            ("eps", self.eps > 0.0 && self.eps.is_finite()),
            ("densify_interval", self.densify_interval > 0),
            (
                "prune_opacity_threshold",
                (0.0..1.0).contains(&self.prune_opacity_threshold),
            ),
            (
                "split_grad_threshold",
                self.split_grad_threshold > 0.0 && self.split_grad_threshold.is_finite(),
            ),
            ("percent_dense", self.percent_dense > 0.0 && self.percent_dense.is_finite()),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::config(format!("{path}.{name}"), "value out of range"));
            }
        }
        Ok(())
    }

    fn learning_rates(&self) -> [f64; PARAMS_PER_GAUSSIAN] {
        let mut lr = [0.0; PARAMS_PER_GAUSSIAN];
        lr[0..3].fill(self.lr_position);
        lr[3..6].fill(self.lr_color);
        lr[6] = self.lr_opacity;
        lr[7..10].fill(self.lr_scale);
        lr[10..14].fill(self.lr_rotation);
        lr
    }
}

/// First and second moments per Gaussian plus the shared step count.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
    pub v: Vec<[f64; PARAMS_PER_GAUSSIAN]>,
    /// Gaussians skipped because of non-finite gradients, cumulative.
    pub nan_skipped: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            v: vec![[0.0; PARAMS_PER_GAUSSIAN]; n],
            nan_skipped: 0,
        }
    }

    /// Rebuilds moments after the scene was restructured. `origin[i]` is the
    /// previous index of new Gaussian `i`, or `None` for fresh ones.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let zero = [0.0; PARAMS_PER_GAUSSIAN];
        self.m = origin.iter().map(|o| o.map_or(zero, |j| self.m[j])).collect();
        self.v = origin.iter().map(|o| o.map_or(zero, |j| self.v[j])).collect();
    }
}

fn flatten(g: &ParamGrad) -> [f64; PARAMS_PER_GAUSSIAN] {
    let mut f = [0.0; PARAMS_PER_GAUSSIAN];
    f[0..3].copy_from_slice(&g.center);
    f[3..6].copy_from_slice(&g.color);
    f[6] = g.opacity_logit;
    f[7..10].copy_from_slice(&g.log_scale);
    f[10..14].copy_from_slice(&g.rotation);
    f
}

/// One Adam update of every Gaussian.
pub fn adam_step(
    scene: &mut GaussianScene,
    grads: &[ParamGrad],
    settings: &OptimSettings,
    state: &mut AdamState,
) -> Result<()> {
    let n = scene.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::shape(format!(
            "adam: scene has {n} Gaussians, gradients {}, state {}",
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (settings.beta1, settings.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = settings.learning_rates();
    for i in 0..n {
        let g = flatten(&grads[i]);
        if g.iter().any(|v| !v.is_finite()) {
            state.nan_skipped += 1;
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let mut delta = [0.0; PARAMS_PER_GAUSSIAN];
        for p in 0..PARAMS_PER_GAUSSIAN {
            m[p] = b1 * m[p] + (1.0 - b1) * g[p];
            v[p] = b2 * v[p] + (1.0 - b2) * g[p] * g[p];
            let mh = m[p] / c1;
            let vh = v[p] / c2;
            delta[p] = -lr[p] * mh / (vh.sqrt() + settings.eps);
        }
        let apply = |x: &mut f64, d: f64| {
            if d != 0.0 {
                *x += d;
            }
        };
        for a in 0..3 {
            apply(&mut scene.centers[i][a], delta[a]);
            if delta[3 + a] != 0.0 {
                scene.colors[i][a] = (scene.colors[i][a] + delta[3 + a]).clamp(0.0, 1.0);
            }
            apply(&mut scene.log_scales[i][a], delta[7 + a]);
        }
        apply(&mut scene.opacity_logits[i], delta[6]);
        if delta[10..14].iter().any(|d| *d != 0.0) {
            for a in 0..4 {
                scene.rotations[i][a] += delta[10 + a];
            }
            scene.rotations[i] = normalize_quat(scene.rotations[i]);
        }
    }
    Ok(())
}
