use super::ImageRefiner;
use crate::error::{Error, Result};
use crate::geometry::Image;

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::param(format!("refine time {t} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityRefiner;

pub fn identity_refiner() -> IdentityRefiner {
    IdentityRefiner
}

impl ImageRefiner for IdentityRefiner {
    fn refine(&self, image: &Image, t: f64) -> Result<Image> {
        check_t(t)?;
        Ok(image.clone())
    }
}

/// Gaussian blur whose border weights are renormalized per source pixel, so
/// the total intensity of each channel is preserved.
#[derive(Debug, Clone, Copy)]
pub struct BlurRefiner {
    pub sigma: f64,
}

pub fn blur_refiner(sigma: f64) -> Result<BlurRefiner> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param(format!("blur sigma must be positive, got {sigma}")));
    }
    Ok(BlurRefiner { sigma })
}

fn scatter_1d(src: &[f64], n: usize, stride: usize, kernel: &[f64], out: &mut [f64]) {
    let r = (kernel.len() / 2) as isize;
    for i in 0..n as isize {
        let lo = (i - r).max(0);
        let hi = (i + r).min(n as isize - 1);
        let norm: f64 = (lo..=hi).map(|j| kernel[(j - i + r) as usize]).sum();
        let v = src[i as usize * stride] / norm;
        for j in lo..=hi {
            out[j as usize * stride] += v * kernel[(j - i + r) as usize];
        }
    }
}

impl ImageRefiner for BlurRefiner {
    fn refine(&self, image: &Image, t: f64) -> Result<Image> {
        check_t(t)?;
        let r = (3.0 * self.sigma).ceil() as usize;
        let kernel: Vec<f64> = (0..=2 * r)
            .map(|i| {
                let x = i as f64 - r as f64;
                (-x * x / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let (w, h) = image.dims();
        let mut out = image.clone();
        for c in 0..3 {
            let plane: Vec<f64> = image.data.iter().skip(c).step_by(3).copied().collect();
            let mut rows = vec![0.0; w * h];
            for y in 0..h {
                scatter_1d(&plane[y * w..], w, 1, &kernel, &mut rows[y * w..]);
            }
            let mut cols = vec![0.0; w * h];
            for x in 0..w {
                scatter_1d(&rows[x..], h, w, &kernel, &mut cols[x..]);
            }
            for (i, v) in cols.into_iter().enumerate() {
                out.data[3 * i + c] = v;
            }
        }
        Ok(out)
    }
}
