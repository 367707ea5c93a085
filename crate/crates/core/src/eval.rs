//! Image fidelity and camera trajectory metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::geometry::{relative, rotation_angle_between, CameraPose, Image};

/// PSNR reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// Peak signal-to-noise ratio for unit-range images, capped at [`PSNR_CAP`].
pub fn psnr(pred: &Image, target: &Image) -> Result<f64> {
    ensure_same_dims("psnr", pred.dims(), target.dims())?;
    if pred.data.is_empty() {
        return Err(Error::EmptyInput("psnr of an empty image".into()));
    }
    let mse = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / pred.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

/// Mean SSIM (11×11 Gaussian window, σ = 1.5).
pub fn ssim(pred: &Image, target: &Image) -> Result<f64> {
    crate::optimize::ssim(pred, target)
}

/// Mean rotation error (radians) and mean normalized translation error.
///
/// Both trajectories are first expressed relative to their own first camera.
/// Translations are divided by the largest relative translation norm of their
/// trajectory. Means run over every frame after the first, which is the
/// identity in both after alignment.
pub fn camera_error(pred: &[CameraPose], gt: &[CameraPose]) -> Result<(f64, f64)> {
    if pred.len() != gt.len() {
        return Err(Error::shape(format!(
            "trajectories have {} and {} poses",
            pred.len(),
            gt.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::param("camera error needs at least two poses"));
    }
    let align = |poses: &[CameraPose]| -> Result<Vec<CameraPose>> {
        let rel: Vec<CameraPose> = poses.iter().map(|p| relative(&poses[0], p)).collect();
        let norm = rel.iter().map(|p| p.translation.norm()).fold(0.0, f64::max);
        if !(norm > 0.0) {
            return Err(Error::param(
                "degenerate trajectory: all cameras share one position",
            ));
        }
        Ok(rel
            .into_iter()
            .map(|mut p| {
                p.translation /= norm;
                p
            })
            .collect())
    };
    let p = align(pred)?;
    let g = align(gt)?;
    let n = (pred.len() - 1) as f64;
    let mut r_err = 0.0;
    let mut t_err = 0.0;
    for (a, b) in p.iter().zip(&g).skip(1) {
        r_err += rotation_angle_between(&a.rotation, &b.rotation);
        t_err += (a.translation - b.translation).norm();
    }
    Ok((r_err / n, t_err / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub per_frame: Vec<FrameMetrics>,
    pub r_err: Option<f64>,
    pub t_err: Option<f64>,
}

/// Per-frame and mean image metrics, plus camera error when poses are given.
pub fn evaluate(
    pred: &[Image],
    target: &[Image],
    poses: Option<(&[CameraPose], &[CameraPose])>,
) -> Result<MetricReport> {
    if pred.len() != target.len() {
        return Err(Error::shape(format!(
            "{} predicted frames vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput("no frames to evaluate".into()));
    }
    let per_frame = pred
        .par_iter()
        .zip(target.par_iter())
        .map(|(a, b)| {
            Ok(FrameMetrics {
                psnr: psnr(a, b)?,
                ssim: ssim(a, b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_frame.len() as f64;
    let (r_err, t_err) = match poses {
        Some((p, g)) => {
            let (r, t) = camera_error(p, g)?;
            (Some(r), Some(t))
        }
        None => (None, None),
    };
    Ok(MetricReport {
        psnr_mean: per_frame.iter().map(|f| f.psnr).sum::<f64>() / n,
        ssim_mean: per_frame.iter().map(|f| f.ssim).sum::<f64>() / n,
        per_frame,
        r_err,
        t_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psnr_closed_forms() {
        let a = Image::filled(8, 8, [0.4; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        let b = Image::filled(8, 8, [0.5; 3]);
        assert_abs_diff_eq!(psnr(&a, &b).unwrap(), 20.0, epsilon = 1e-9);
        assert_abs_diff_eq!(psnr_from_mse(0.01), 20.0, epsilon = 1e-12);
        assert!(psnr(&a, &Image::new(4, 4)).is_err());
    }

    #[test]
    fn psnr_decreases_with_mse() {
        let mut prev = f64::INFINITY;
        for k in 1..20 {
            let v = psnr_from_mse(k as f64 * 0.01);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn camera_error_rejects_bad_input() {
        let p = vec![CameraPose::identity(); 3];
        assert!(camera_error(&p, &p[..2]).is_err());
        assert!(camera_error(&p[..1], &p[..1]).is_err());
        assert!(camera_error(&p, &p).is_err());
    }
}
