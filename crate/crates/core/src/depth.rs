//! Depth alignment of estimated keyframe depths against rendered scene depth.
//!
//! The estimate is first brought to the scene's scale with a median ratio on
//! the reference view, then blended into the known region with a guided
//! filter so that new geometry meets existing geometry without seams.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dims, Error, Result};
use crate::geometry::{median, BinaryMask, DepthMap, Plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentParams {
    pub guided_filter_radius: usize,
    pub guided_filter_eps: f64,
    pub dilation_iters: usize,
    /// Rendered alpha below this marks a pixel as missing.
    pub alpha_threshold: f64,
}

impl Default for AlignmentParams {
    fn default() -> Self {
        Self {
            guided_filter_radius: 9,
            guided_filter_eps: 1e-4,
            dilation_iters: 25,
            alpha_threshold: 0.5,
        }
    }
}

impl AlignmentParams {
    pub fn validate(&self, path: &str) -> Result<()> {
        if self.guided_filter_radius < 1 {
            return Err(Error::config(format!("{path}.guided_filter_radius"), "must be >= 1"));
        }
        if !(self.guided_filter_eps >= 0.0) || !self.guided_filter_eps.is_finite() {
            return Err(Error::config(format!("{path}.guided_filter_eps"), "must be >= 0"));
        }
        if !(self.alpha_threshold > 0.0 && self.alpha_threshold < 1.0) {
            return Err(Error::config(format!("{path}.alpha_threshold"), "must be in (0, 1)"));
        }
        Ok(())
    }
}

/// `Median(rendered) / Median(estimated)` over pixels valid in both maps.
pub fn median_scale(estimated_ref: &DepthMap, rendered_ref: &DepthMap) -> Result<f64> {
    ensure_same_dims("median_scale", estimated_ref.dims(), rendered_ref.dims())?;
    let (mut est, mut ren): (Vec<f64>, Vec<f64>) = (0..estimated_ref.len())
        .filter(|&i| estimated_ref.is_valid(i) && rendered_ref.is_valid(i))
        .map(|i| (estimated_ref.values()[i], rendered_ref.values()[i]))
        .unzip();
    if est.is_empty() {
        return Err(Error::EmptyInput("no jointly valid reference pixels".into()));
    }
    let m_est = median(&mut est).unwrap();
    let m_ren = median(&mut ren).unwrap();
    if m_est <= 0.0 {
        return Err(Error::DegenerateDepth(format!("estimated median depth is {m_est}")));
    }
    Ok(m_ren / m_est)
}

/// Summed-area table with a zero first row and column.
struct Integral {
    w: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, f: impl Fn(usize) -> f64) -> Self {
        let w = width + 1;
        let mut sums = vec![0.0; w * (height + 1)];
        for v in 0..height {
            let mut row = 0.0;
            for u in 0..width {
                row += f(v * width + u);
                sums[(v + 1) * w + u + 1] = sums[v * w + u + 1] + row;
            }
        }
        Self { w, sums }
    }

    /// Sum over the inclusive rectangle `[u0, u1] × [v0, v1]`.
    fn rect(&self, u0: usize, v0: usize, u1: usize, v1: usize) -> f64 {
        let w = self.w;
        self.sums[(v1 + 1) * w + u1 + 1] - self.sums[v0 * w + u1 + 1] - self.sums[(v1 + 1) * w + u0]
            + self.sums[v0 * w + u0]
    }
}

fn window(c: usize, r: usize, n: usize) -> (usize, usize) {
    (c.saturating_sub(r), (c + r).min(n - 1))
}

/// Edge-preserving guided filter `q = ā·guide + b̄`.
///
/// Per window, `a = cov(guide, input) / (var(guide) + eps)` and
/// `b = mean(input) − a·mean(guide)`; a pixel takes part in window statistics
/// only when both input and guide are valid there. Windows are truncated at
/// the image border. Output is invalid where the guide is invalid or no
/// window covering the pixel had valid statistics.
pub fn guided_filter(input: &DepthMap, guide: &DepthMap, radius: usize, eps: f64) -> Result<DepthMap> {
    ensure_same_dims("guided_filter", input.dims(), guide.dims())?;
    if radius < 1 {
        return Err(Error::param("guided filter radius must be >= 1"));
    }
    if !(eps >= 0.0) {
        return Err(Error::param(format!("guided filter eps must be >= 0, got {eps}")));
    }
    let (w, h) = input.dims();
    let both = |i: usize| input.is_valid(i) && guide.is_valid(i);
    let n_valid = (0..w * h).filter(|&i| both(i)).count();
    if n_valid == 0 {
        return Ok(DepthMap::invalid(w, h));
    }
    // Shift both signals to zero mean to keep the moment sums well conditioned.
    let (mut i0, mut g0) = (0.0, 0.0);
    for i in (0..w * h).filter(|&i| both(i)) {
        i0 += input.values()[i];
        g0 += guide.values()[i];
    }
    i0 /= n_valid as f64;
    g0 /= n_valid as f64;
    let x = |i: usize| input.values()[i] - i0;
    let y = |i: usize| guide.values()[i] - g0;
    let ind = |i: usize| if both(i) { 1.0 } else { 0.0 };

    let count = Integral::new(w, h, ind);
    let sum_i = Integral::new(w, h, |i| ind(i) * x(i));
    let sum_g = Integral::new(w, h, |i| ind(i) * y(i));
    let sum_ig = Integral::new(w, h, |i| ind(i) * x(i) * y(i));
    let sum_gg = Integral::new(w, h, |i| ind(i) * y(i) * y(i));

    let mut a = vec![0.0; w * h];
    let mut b = vec![0.0; w * h];
    let mut has = vec![false; w * h];
    for v in 0..h {
        let (v0, v1) = window(v, radius, h);
        for u in 0..w {
            let (u0, u1) = window(u, radius, w);
            let n = count.rect(u0, v0, u1, v1);
            if n < 0.5 {
                continue;
            }
            let k = v * w + u;
            let mi = sum_i.rect(u0, v0, u1, v1) / n;
            let mg = sum_g.rect(u0, v0, u1, v1) / n;
            let var = (sum_gg.rect(u0, v0, u1, v1) / n - mg * mg).max(0.0);
            let cov = sum_ig.rect(u0, v0, u1, v1) / n - mi * mg;
            let denom = var + eps;
            let ak = if denom > 0.0 { cov / denom } else { 0.0 };
            a[k] = ak;
            b[k] = mi - ak * mg;
            has[k] = true;
        }
    }

    let has_f = |i: usize| if has[i] { 1.0 } else { 0.0 };
    let count_ab = Integral::new(w, h, has_f);
    let sum_a = Integral::new(w, h, |i| a[i]);
    let sum_b = Integral::new(w, h, |i| b[i]);
    let mut out = DepthMap::invalid(w, h);
    for v in 0..h {
        let (v0, v1) = window(v, radius, h);
        for u in 0..w {
            let i = v * w + u;
            if !guide.is_valid(i) {
                continue;
            }
            let (u0, u1) = window(u, radius, w);
            let n = count_ab.rect(u0, v0, u1, v1);
            if n < 0.5 {
                continue;
            }
            let q = sum_a.rect(u0, v0, u1, v1) / n * y(i) + sum_b.rect(u0, v0, u1, v1) / n + i0;
            out.set(i, Some(q.max(0.0)));
        }
    }
    Ok(out)
}

/// Aligns `scale × estimated` to the rendered depth of the current scene.
///
/// `mask` marks pixels to be filled (true = unknown). The scaled estimate is
/// guided-filtered using a guide that carries rendered depth on known pixels
/// and the scaled estimate elsewhere; known pixels then take the rendered
/// depth and unknown pixels take the filtered estimate. Filtering happens on
/// depths normalized to unit median, so the result is homogeneous in `scale`.
pub fn depth_align(
    estimated: &DepthMap,
    rendered: &DepthMap,
    mask: &BinaryMask,
    scale: f64,
    params: &AlignmentParams,
) -> Result<DepthMap> {
    ensure_same_dims("depth_align estimated/rendered", estimated.dims(), rendered.dims())?;
    ensure_same_dims("depth_align estimated/mask", estimated.dims(), mask.dims())?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::param(format!("depth scale must be positive, got {scale}")));
    }
    let (w, h) = estimated.dims();
    let scaled = estimated.scaled(scale);
    let known = |i: usize| !mask.values[i] && rendered.is_valid(i);

    let mut guide = DepthMap::invalid(w, h);
    for i in 0..w * h {
        if known(i) {
            guide.set(i, Some(rendered.values()[i]));
        } else if scaled.is_valid(i) {
            guide.set(i, Some(scaled.values()[i]));
        }
    }
    let norm = match median(&mut guide.valid_values().collect::<Vec<_>>()) {
        Some(m) if m > 0.0 => m,
        _ => 1.0,
    };
    let filtered = guided_filter(
        &scaled.scaled(1.0 / norm),
        &guide.scaled(1.0 / norm),
        params.guided_filter_radius,
        params.guided_filter_eps,
    )?
    .scaled(norm);

    let mut out = DepthMap::invalid(w, h);
    for i in 0..w * h {
        if known(i) {
            out.set(i, Some(rendered.values()[i]));
        } else if filtered.is_valid(i) {
            out.set(i, Some(filtered.values()[i]));
        }
    }
    Ok(out)
}

/// `iters` rounds of 3×3 eight-connected dilation, clipped at the border.
///
/// Equivalent to marking every pixel within Chebyshev distance `iters` of a
/// set pixel, computed separably.
pub fn dilate(mask: &BinaryMask, iters: usize) -> BinaryMask {
    if iters == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let rows = max_filter_1d(&mask.values, w, h, iters, true);
    let values = max_filter_1d(&rows, w, h, iters, false);
    BinaryMask {
        width: w,
        height: h,
        values,
    }
}

fn max_filter_1d(src: &[bool], w: usize, h: usize, r: usize, along_rows: bool) -> Vec<bool> {
    let (lines, len) = if along_rows { (h, w) } else { (w, h) };
    let idx = |line: usize, k: usize| if along_rows { line * w + k } else { k * w + line };
    let mut out = vec![false; w * h];
    let mut prefix = vec![0usize; len + 1];
    for line in 0..lines {
        for k in 0..len {
            prefix[k + 1] = prefix[k] + usize::from(src[idx(line, k)]);
        }
        for k in 0..len {
            let (lo, hi) = window(k, r, len);
            out[idx(line, k)] = prefix[hi + 1] > prefix[lo];
        }
    }
    out
}

/// True where `alpha < threshold`: pixels the scene does not cover yet.
pub fn mask_from_alpha(alpha: &Plane, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::param(format!("alpha threshold {threshold} outside (0, 1)")));
    }
    BinaryMask::from_values(
        alpha.width,
        alpha.height,
        alpha.values.iter().map(|a| *a < threshold).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_depth(w: usize, h: usize, seed: u64) -> DepthMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DepthMap::from_dense(w, h, (0..w * h).map(|_| rng.random_range(0.5..6.0)).collect())
            .unwrap()
    }

    /// Brute-force guided filter, window by window.
    fn guided_filter_brute(input: &DepthMap, guide: &DepthMap, r: usize, eps: f64) -> Vec<Option<f64>> {
        let (w, h) = input.dims();
        let mut ab = vec![None; w * h];
        for v in 0..h {
            for u in 0..w {
                let (mut n, mut si, mut sg, mut sig, mut sgg) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for vv in v.saturating_sub(r)..=(v + r).min(h - 1) {
                    for uu in u.saturating_sub(r)..=(u + r).min(w - 1) {
                        if let (Some(x), Some(g)) = (input.get(uu, vv), guide.get(uu, vv)) {
                            n += 1.0;
                            si += x;
                            sg += g;
                            sig += x * g;
                            sgg += g * g;
                        }
                    }
                }
                if n > 0.0 {
                    let (mi, mg) = (si / n, sg / n);
                    let var = (sgg / n - mg * mg).max(0.0);
                    let a = if var + eps > 0.0 { (sig / n - mi * mg) / (var + eps) } else { 0.0 };
                    ab[v * w + u] = Some((a, mi - a * mg));
                }
            }
        }
        let mut out = vec![None; w * h];
        for v in 0..h {
            for u in 0..w {
                let Some(g) = guide.get(u, v) else { continue };
                let (mut n, mut sa, mut sb) = (0.0, 0.0, 0.0);
                for vv in v.saturating_sub(r)..=(v + r).min(h - 1) {
                    for uu in u.saturating_sub(r)..=(u + r).min(w - 1) {
                        if let Some((a, b)) = ab[vv * w + uu] {
                            n += 1.0;
                            sa += a;
                            sb += b;
                        }
                    }
                }
                if n > 0.0 {
                    out[v * w + u] = Some((sa / n * g + sb / n).max(0.0));
                }
            }
        }
        out
    }

    #[test]
    fn median_scale_examples() {
        let rendered = random_depth(12, 9, 1);
        assert_abs_diff_eq!(median_scale(&rendered.scaled(2.0), &rendered).unwrap(), 0.5);
        assert_eq!(median_scale(&rendered, &rendered).unwrap(), 1.0);
    }

    #[test]
    fn median_scale_sort_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // Rendered values spread around 4, estimate around 8, odd count.
        let n = 101;
        let ren: Vec<f64> = (0..n).map(|i| 4.0 + (i as f64 - 50.0) * 0.01).collect();
        let mut ren_shuffled = ren.clone();
        for i in (1..n).rev() {
            ren_shuffled.swap(i, rng.random_range(0..=i));
        }
        let est: Vec<f64> = ren_shuffled.iter().map(|v| 8.0 + (v - 4.0) * rng.random_range(0.5..1.5)).collect();
        let mut sorted_r = ren_shuffled.clone();
        sorted_r.sort_by(f64::total_cmp);
        let mut sorted_e = est.clone();
        sorted_e.sort_by(f64::total_cmp);
        assert_eq!(sorted_r[n / 2], 4.0);
        assert_eq!(sorted_e[n / 2], 8.0);
        let r = DepthMap::from_dense(n, 1, ren_shuffled).unwrap();
        let e = DepthMap::from_dense(n, 1, est).unwrap();
        assert_eq!(median_scale(&e, &r).unwrap(), 0.5);
    }

    #[test]
    fn median_scale_errors() {
        let zero = DepthMap::constant(4, 4, 0.0);
        let one = DepthMap::constant(4, 4, 1.0);
        assert!(matches!(median_scale(&zero, &one), Err(Error::DegenerateDepth(_))));
        assert!(matches!(
            median_scale(&DepthMap::invalid(4, 4), &one),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(median_scale(&one, &DepthMap::constant(3, 4, 1.0)), Err(Error::Shape(_))));
    }

    #[test]
    fn median_scale_is_scale_equivariant() {
        let a = random_depth(10, 10, 3);
        let b = random_depth(10, 10, 4);
        let base = median_scale(&a, &b).unwrap();
        for k in [0.25, 3.0, 7.5] {
            assert_abs_diff_eq!(median_scale(&a.scaled(k), &b).unwrap(), base / k, epsilon = 1e-12);
        }
    }

    #[test]
    fn guided_filter_matches_brute_force() {
        let input = random_depth(17, 13, 11);
        let mut guide = random_depth(17, 13, 12);
        guide.set(20, None);
        let mut input_holes = input.clone();
        input_holes.set(40, None);
        input_holes.set(41, None);
        let fast = guided_filter(&input_holes, &guide, 2, 0.05).unwrap();
        let slow = guided_filter_brute(&input_holes, &guide, 2, 0.05);
        for (i, s) in slow.iter().enumerate() {
            match s {
                Some(v) => assert_abs_diff_eq!(fast.values()[i], *v, epsilon = 1e-9),
                None => assert!(!fast.is_valid(i)),
            }
        }
    }

    #[test]
    fn guided_filter_large_eps_limit() {
        let input = random_depth(15, 11, 21);
        let guide = random_depth(15, 11, 22);
        let var = 2.0; // guide values lie in (0.5, 6): variance below 3.
        let out = guided_filter(&input, &guide, 2, 1e6 * var).unwrap();
        // a → 0 leaves the window mean of the window means of the input.
        let zero_a = guided_filter_brute(&input, &DepthMap::constant(15, 11, 1.0), 2, 0.0);
        for (i, v) in zero_a.iter().enumerate() {
            assert_abs_diff_eq!(out.values()[i], v.unwrap(), epsilon = 1e-4);
        }
    }

    #[test]
    fn guided_filter_self_guide_zero_eps_is_identity() {
        let input = random_depth(16, 12, 31);
        let out = guided_filter(&input, &input, 3, 0.0).unwrap();
        for i in 0..input.len() {
            assert_abs_diff_eq!(out.values()[i], input.values()[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn guided_filter_preserves_constants() {
        let c = DepthMap::constant(9, 7, 3.25);
        let guide = random_depth(9, 7, 5);
        let out = guided_filter(&c, &guide, 2, 1e-4).unwrap();
        for v in out.values() {
            assert_abs_diff_eq!(*v, 3.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn guided_filter_preserves_mean_away_from_border() {
        // Random content inside a constant frame wider than three radii:
        // every window near a truncated one sees a constant signal.
        let (w, h, r) = (40, 32, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let frame = 3 * r + 1;
        let values: Vec<f64> = (0..w * h)
            .map(|i| {
                let (u, v) = (i % w, i / w);
                if u < frame || v < frame || u >= w - frame || v >= h - frame {
                    2.0
                } else {
                    rng.random_range(1.0..3.0)
                }
            })
            .collect();
        let input = DepthMap::from_dense(w, h, values).unwrap();
        let out = guided_filter(&input, &input, r, 1e-2).unwrap();
        let mean_in: f64 = input.values().iter().sum::<f64>() / input.len() as f64;
        let mean_out: f64 = out.values().iter().sum::<f64>() / out.len() as f64;
        assert_abs_diff_eq!(mean_in, mean_out, epsilon = 1e-6);
    }

    #[test]
    fn zero_valid_window_gives_invalid_output() {
        let mut input = DepthMap::constant(12, 1, 1.0);
        for i in 0..6 {
            input.set(i, None);
        }
        let guide = DepthMap::constant(12, 1, 1.0);
        let out = guided_filter(&input, &guide, 1, 1e-4).unwrap();
        assert!(!out.is_valid(0) && !out.is_valid(3));
        assert!(out.is_valid(5) && out.is_valid(11));
    }

    #[test]
    fn dilate_examples() {
        let mut m = BinaryMask::filled(5, 5, false);
        m.values[0] = true;
        m.values[12] = true;
        assert_eq!(dilate(&m, 0), m);
        let d = dilate(&m, 1);
        let expected: Vec<bool> = (0..25)
            .map(|i| {
                let (u, v) = (i % 5, i / 5);
                (u <= 1 && v <= 1) || ((1..=3).contains(&u) && (1..=3).contains(&v))
            })
            .collect();
        assert_eq!(d.values, expected);
    }

    #[test]
    fn dilate_matches_iterated_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = BinaryMask::from_values(23, 17, (0..23 * 17).map(|_| rng.random_bool(0.03)).collect())
            .unwrap();
        let mut iter = m.clone();
        let mut prev = m.count();
        for k in 1..=6 {
            let mut next = iter.clone();
            for v in 0..17i64 {
                for u in 0..23i64 {
                    let hit = (-1..=1).any(|dv| {
                        (-1..=1).any(|du| {
                            let (uu, vv) = (u + du, v + dv);
                            (0..23).contains(&uu) && (0..17).contains(&vv) && iter.get(uu as usize, vv as usize)
                        })
                    });
                    next.values[(v * 23 + u) as usize] = hit;
                }
            }
            iter = next;
            let fast = dilate(&m, k);
            assert_eq!(fast, iter);
            assert!(fast.count() >= prev);
            prev = fast.count();
        }
    }

    #[test]
    fn mask_from_alpha_examples() {
        let full = Plane::filled(4, 3, 1.0);
        assert_eq!(mask_from_alpha(&full, 0.5).unwrap().count(), 0);
        let empty = Plane::filled(4, 3, 0.0);
        assert_eq!(mask_from_alpha(&empty, 0.5).unwrap().count(), 12);
        let ramp = Plane::from_values(5, 1, vec![0.0, 0.2, 0.4, 0.6, 0.8]).unwrap();
        let low = mask_from_alpha(&ramp, 0.3).unwrap();
        let high = mask_from_alpha(&ramp, 0.7).unwrap();
        assert!(low.values.iter().zip(&high.values).all(|(l, h)| !*l || *h));
        assert!(mask_from_alpha(&ramp, 1.0).is_err());
    }

    #[test]
    fn depth_align_without_known_region_is_self_smoothing() {
        let est = random_depth(20, 14, 41);
        let mask = BinaryMask::filled(20, 14, true);
        let rendered = DepthMap::invalid(20, 14);
        let p = AlignmentParams::default();
        let out = depth_align(&est, &rendered, &mask, 1.0, &p).unwrap();
        let norm = median(&mut est.valid_values().collect::<Vec<_>>()).unwrap();
        let expected = guided_filter(&est.scaled(1.0 / norm), &est.scaled(1.0 / norm), p.guided_filter_radius, p.guided_filter_eps)
            .unwrap()
            .scaled(norm);
        for i in 0..est.len() {
            assert_abs_diff_eq!(out.values()[i], expected.values()[i], epsilon = 1e-12);
        }
        // Homogeneity in the scale factor.
        let doubled = depth_align(&est, &rendered, &mask, 2.0, &p).unwrap();
        for i in 0..est.len() {
            assert_abs_diff_eq!(doubled.values()[i], 2.0 * out.values()[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn depth_align_known_pixels_take_rendered_depth() {
        let est = random_depth(20, 14, 51);
        let rendered = random_depth(20, 14, 52);
        let mask = BinaryMask::from_values(20, 14, (0..280).map(|i| i % 20 < 10).collect()).unwrap();
        let out = depth_align(&est, &rendered, &mask, 1.3, &AlignmentParams::default()).unwrap();
        for i in 0..280 {
            if !mask.values[i] {
                assert_eq!(out.values()[i], rendered.values()[i]);
            } else {
                assert!(out.is_valid(i) && out.values()[i].is_finite());
            }
        }
    }

    #[test]
    fn depth_align_rejects_bad_scale() {
        let d = DepthMap::constant(3, 3, 1.0);
        let m = BinaryMask::filled(3, 3, true);
        assert!(depth_align(&d, &d, &m, 0.0, &AlignmentParams::default()).is_err());
    }
}
