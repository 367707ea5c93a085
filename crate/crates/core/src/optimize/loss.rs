//! Photometric losses with analytic gradients w.r.t. the prediction.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::geometry::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Perceptual weight used with a pretrained LPIPS network. Not applied by
/// default because no such network ships with this crate.
pub const LPIPS_WEIGHT_WITH_NETWORK: f64 = 0.3;

/// A loss value and its gradient w.r.t. the prediction.
pub type LossEval = (f64, Image);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub w_l1: f64,
    pub w_ssim: f64,
    pub w_lpips: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_l1: 0.8,
            w_ssim: 0.2,
            w_lpips: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self, path: &str) -> Result<()> {
        for (name, w) in [("w_l1", self.w_l1), ("w_ssim", self.w_ssim), ("w_lpips", self.w_lpips)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(
                    format!("{path}.{name}"),
                    format!("must be a non-negative number, got {w}"),
                ));
            }
        }
        if self.w_l1 + self.w_ssim + self.w_lpips <= 0.0 {
            return Err(Error::config(path, "at least one loss weight must be positive"));
        }
        Ok(())
    }
}

/// Pluggable perceptual loss, e.g. a wrapper around a pretrained network.
pub trait PerceptualLoss: Send + Sync {
    fn name(&self) -> &str;
    fn evaluate(&self, pred: &Image, target: &Image) -> Result<LossEval>;
}

/// Perceptual plug-ins by name.
#[derive(Default, Clone)]
pub struct PerceptualRegistry {
    entries: BTreeMap<String, Arc<dyn PerceptualLoss>>,
}

impl PerceptualRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, loss: Arc<dyn PerceptualLoss>) {
        self.entries.insert(loss.name().to_string(), loss);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn PerceptualLoss>> {
        self.entries.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl std::fmt::Debug for PerceptualRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

/// Mean absolute error. The subgradient is zero at exact ties.
pub fn l1_loss(pred: &Image, target: &Image) -> Result<LossEval> {
    ensure_same_dims("l1 loss", pred.dims(), target.dims())?;
    let n = pred.data.len().max(1) as f64;
    let mut grad = Image::new(pred.width, pred.height);
    let mut sum = 0.0;
    for ((g, p), t) in grad.data.iter_mut().zip(&pred.data).zip(&target.data) {
        let d = p - t;
        sum += d.abs();
        *g = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    Ok((sum / n, grad))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut k: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "same" convolution with zero padding. The kernel is symmetric,
/// so this is also its own adjoint.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (t, kv) in k.iter().enumerate() {
                let xx = x as isize + t as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    acc += kv * row[xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (t, kv) in k.iter().enumerate() {
            let yy = y as isize + t as isize - r;
            if yy < 0 || yy as usize >= h {
                continue;
            }
            let src_row = &tmp[yy as usize * w..(yy as usize + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for x in 0..w {
                dst[x] += kv * src_row[x];
            }
        }
    }
    out
}

struct ChannelSsim {
    map: Vec<f64>,
    grad: Option<Vec<f64>>,
}

fn channel_ssim(x: &[f64], y: &[f64], w: usize, h: usize, want_grad: bool, scale: f64) -> ChannelSsim {
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = blur(x, w, h, &k);
    let my = blur(y, w, h, &k);
    let exx = blur(&xx, w, h, &k);
    let eyy = blur(&yy, w, h, &k);
    let exy = blur(&xy, w, h, &k);
    let n = w * h;
    let mut map = vec![0.0; n];
    let (mut g_mx, mut g_exx, mut g_exy) = if want_grad {
        (vec![0.0; n], vec![0.0; n], vec![0.0; n])
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let sx = exx[i] - ux * ux;
        let sy = eyy[i] - uy * uy;
        let sxy = exy[i] - ux * uy;
        let a = 2.0 * ux * uy + SSIM_C1;
        let b = 2.0 * sxy + SSIM_C2;
        let c = ux * ux + uy * uy + SSIM_C1;
        let d = sx + sy + SSIM_C2;
        let s = a * b / (c * d);
        map[i] = s;
        if want_grad {
            // Arranged so every term is exactly zero when x == y: Adam
            // normalizes away magnitude, so roundoff would otherwise move a
            // perfectly fitted scene.
            g_mx[i] = scale * 2.0 * (uy * (b - a) + ux * s * (c - d)) / (c * d);
            g_exx[i] = scale * -(s / d);
            g_exy[i] = scale * (2.0 / d) * (a / c);
        }
    }
    let grad = want_grad.then(|| {
        let bmx = blur(&g_mx, w, h, &k);
        let bxx = blur(&g_exx, w, h, &k);
        let bxy = blur(&g_exy, w, h, &k);
        (0..n)
            .map(|i| bmx[i] + 2.0 * x[i] * bxx[i] + y[i] * bxy[i])
            .collect()
    });
    ChannelSsim { map, grad }
}

fn split_channel(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Per-pixel, per-channel SSIM map (interleaved like [`Image`]).
pub fn ssim_map(pred: &Image, target: &Image) -> Result<Image> {
    ensure_same_dims("ssim", pred.dims(), target.dims())?;
    let (w, h) = pred.dims();
    let mut out = Image::new(w, h);
    for c in 0..3 {
        let r = channel_ssim(&split_channel(pred, c), &split_channel(target, c), w, h, false, 0.0);
        for (i, v) in r.map.into_iter().enumerate() {
            out.data[3 * i + c] = v;
        }
    }
    Ok(out)
}

/// Mean SSIM over pixels and channels.
pub fn ssim(pred: &Image, target: &Image) -> Result<f64> {
    let m = ssim_map(pred, target)?;
    Ok(m.data.iter().sum::<f64>() / m.data.len().max(1) as f64)
}

/// `1 − SSIM` and its gradient w.r.t. `pred`.
pub fn ssim_loss(pred: &Image, target: &Image) -> Result<LossEval> {
    ensure_same_dims("ssim loss", pred.dims(), target.dims())?;
    let (w, h) = pred.dims();
    let count = (w * h * 3).max(1) as f64;
    let mut grad = Image::new(w, h);
    let mut total = 0.0;
    for c in 0..3 {
        let r = channel_ssim(
            &split_channel(pred, c),
            &split_channel(target, c),
            w,
            h,
            true,
            -1.0 / count,
        );
        total += r.map.iter().sum::<f64>();
        for (i, g) in r.grad.unwrap().into_iter().enumerate() {
            grad.data[3 * i + c] = g;
        }
    }
    Ok((1.0 - total / count, grad))
}

/// Weighted photometric loss. A positive perceptual weight requires a plug-in.
pub fn combined_loss(
    pred: &Image,
    target: &Image,
    weights: &LossWeights,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<LossEval> {
    weights.validate("loss")?;
    ensure_same_dims("combined loss", pred.dims(), target.dims())?;
    let mut value = 0.0;
    let mut grad = Image::new(pred.width, pred.height);
    let mut accumulate = |w: f64, (v, g): LossEval| {
        value += w * v;
        for (a, b) in grad.data.iter_mut().zip(&g.data) {
            *a += w * b;
        }
    };
    if weights.w_l1 > 0.0 {
        accumulate(weights.w_l1, l1_loss(pred, target)?);
    }
    if weights.w_ssim > 0.0 {
        accumulate(weights.w_ssim, ssim_loss(pred, target)?);
    }
    if weights.w_lpips > 0.0 {
        let p = perceptual.ok_or_else(|| {
            Error::config("loss.w_lpips", "positive weight but no perceptual loss registered")
        })?;
        let eval = p.evaluate(pred, target)?;
        ensure_same_dims("perceptual gradient", eval.1.dims(), pred.dims())?;
        accumulate(weights.w_lpips, eval);
    }
    Ok((value, grad))
}
