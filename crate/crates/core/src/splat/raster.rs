//! Tile binning, front-to-back compositing and its reverse-mode pass.

use rayon::prelude::*;

use super::project::{project_backward, project_one, Projected, ProjectionStats, Splat, SplatGrad};
use super::{GaussianScene, OutputGrads, RenderOutput, RenderSettings, SceneGradients};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap, Image, Plane};

#[derive(Debug, Clone)]
pub(crate) struct Frame {
    splats: Vec<Splat>,
    /// Per tile, indices into `splats` in front-to-back order.
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    /// Transmittance left after compositing, per pixel.
    final_t: Vec<f64>,
    /// Number of tile-list entries visited, per pixel.
    visited: Vec<u32>,
    /// Unnormalized expected depth, per pixel.
    depth_num: Vec<f64>,
}

struct TileForward {
    color: Vec<[f64; 3]>,
    depth: Vec<f64>,
    final_t: Vec<f64>,
    visited: Vec<u32>,
}

/// Alpha of `s` at pixel `(px, py)`, with the unclamped value. The pixel
/// must lie inside the splat's rectangle.
#[inline]
fn splat_alpha(s: &Splat, px: usize, py: usize, alpha_max: f64) -> Option<(f64, f64, f64, f64)> {
    let dx = px as f64 - s.mean[0];
    let dy = py as f64 - s.mean[1];
    let [a, b, c] = s.conic;
    let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
    if power > 0.0 {
        return None;
    }
    let g = power.exp();
    let raw = s.opacity * g;
    Some((raw.min(alpha_max), raw, dx, dy))
}

/// Pixel ranges of `s`'s rectangle inside a tile.
#[inline]
fn clip_rect(
    s: &Splat,
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    let ux = (s.rect[0] as usize).max(x0)..(s.rect[1] as usize + 1).min(x1);
    let uy = (s.rect[2] as usize).max(y0)..(s.rect[3] as usize + 1).min(y1);
    (!ux.is_empty() && !uy.is_empty()).then_some((ux, uy))
}

/// Reverse-pass state of one pixel.
struct PixelBack {
    gc: [f64; 3],
    g_n: f64,
    g_a: f64,
    t_final: f64,
    tr: f64,
    behind: [f64; 3],
    behind_z: f64,
    visited: usize,
}

fn tile_bounds(t: usize, tiles_x: usize, ts: usize, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let (tx, ty) = (t % tiles_x, t / tiles_x);
    let x0 = tx * ts;
    let y0 = ty * ts;
    (x0, (x0 + ts).min(w), y0, (y0 + ts).min(h))
}

pub(crate) fn forward(
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    e: &CameraPose,
    settings: &RenderSettings,
) -> (Frame, RenderOutput) {
    let (w, h) = (k.width, k.height);
    let ts = settings.tile_size;
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);

    let (splats, mut stats) = (0..scene.len())
        .into_par_iter()
        .fold(
            || (Vec::new(), ProjectionStats::default()),
            |(mut v, mut st), i| {
                match project_one(scene, i, k, e, settings) {
                    Projected::Visible(s) => v.push(s),
                    Projected::Behind => st.behind_camera += 1,
                    Projected::OffScreen => st.off_screen += 1,
                    Projected::Degenerate => st.degenerate += 1,
                }
                (v, st)
            },
        )
        .reduce(
            || (Vec::new(), ProjectionStats::default()),
            |(mut a, sa), (b, sb)| {
                a.extend(b);
                (
                    a,
                    ProjectionStats {
                        visible: 0,
                        behind_camera: sa.behind_camera + sb.behind_camera,
                        off_screen: sa.off_screen + sb.off_screen,
                        degenerate: sa.degenerate + sb.degenerate,
                    },
                )
            },
        );
    stats.visible = splats.len();

    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
        sa.depth.total_cmp(&sb.depth).then(sa.index.cmp(&sb.index))
    });
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for &si in &order {
        let r = splats[si as usize].rect;
        for ty in r[2] as usize / ts..=r[3] as usize / ts {
            for tx in r[0] as usize / ts..=r[1] as usize / ts {
                tiles[ty * tiles_x + tx].push(si);
            }
        }
    }

    let per_tile: Vec<TileForward> = (0..tiles.len())
        .into_par_iter()
        .map(|t| {
            let (x0, x1, y0, y1) = tile_bounds(t, tiles_x, ts, w, h);
            let tw = x1 - x0;
            let n = tw * (y1 - y0);
            let mut out = TileForward {
                color: vec![[0.0; 3]; n],
                depth: vec![0.0; n],
                final_t: vec![1.0; n],
                visited: vec![0; n],
            };
            let mut done = vec![false; n];
            let mut remaining = n;
            // Splat-major: each pixel still sees the list in front-to-back order.
            for (j, &si) in tiles[t].iter().enumerate() {
                if remaining == 0 {
                    break;
                }
                let s = &splats[si as usize];
                let Some((ux, uy)) = clip_rect(s, x0, x1, y0, y1) else {
                    continue;
                };
                for py in uy.clone() {
                    for px in ux.clone() {
                        let li = (py - y0) * tw + px - x0;
                        if done[li] {
                            continue;
                        }
                        let Some((alpha, ..)) = splat_alpha(s, px, py, settings.alpha_max) else {
                            continue;
                        };
                        let tr = &mut out.final_t[li];
                        let wgt = alpha * *tr;
                        for c in 0..3 {
                            out.color[li][c] += s.color[c] * wgt;
                        }
                        out.depth[li] += s.depth * wgt;
                        *tr *= 1.0 - alpha;
                        out.visited[li] = j as u32 + 1;
                        if *tr < settings.min_transmittance {
                            done[li] = true;
                            remaining -= 1;
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut color = Image::new(w, h);
    let mut depth = DepthMap::invalid(w, h);
    let mut alpha = Plane::filled(w, h, 0.0);
    let mut final_t = vec![1.0; w * h];
    let mut visited = vec![0u32; w * h];
    let mut depth_num = vec![0.0; w * h];
    let bg = settings.background;
    for (t, tile) in per_tile.into_iter().enumerate() {
        let (x0, x1, y0, y1) = tile_bounds(t, tiles_x, ts, w, h);
        let mut j = 0;
        for py in y0..y1 {
            for px in x0..x1 {
                let i = py * w + px;
                let tr = tile.final_t[j];
                let a = 1.0 - tr;
                let c = tile.color[j];
                color.set_pixel(px, py, std::array::from_fn(|k| c[k] + tr * bg[k]));
                alpha.values[i] = a;
                if a > 0.0 {
                    depth.set(i, Some(tile.depth[j] / a));
                }
                final_t[i] = tr;
                visited[i] = tile.visited[j];
                depth_num[i] = tile.depth[j];
                j += 1;
            }
        }
    }
    let frame = Frame {
        splats,
        tiles,
        tiles_x,
        final_t,
        visited,
        depth_num,
    };
    (
        frame,
        RenderOutput {
            color,
            depth,
            alpha,
            stats,
        },
    )
}

pub(crate) fn backward(
    scene: &GaussianScene,
    k: &CameraIntrinsics,
    e: &CameraPose,
    settings: &RenderSettings,
    frame: &Frame,
    grads: OutputGrads<'_>,
) -> SceneGradients {
    let (w, h) = (k.width, k.height);
    let ts = settings.tile_size;
    let bg = settings.background;

    // Per tile, gradients aligned with the tile list.
    let per_tile: Vec<Vec<SplatGrad>> = (0..frame.tiles.len())
        .into_par_iter()
        .map(|t| {
            let list = &frame.tiles[t];
            let mut acc = vec![SplatGrad::default(); list.len()];
            if list.is_empty() {
                return acc;
            }
            let (x0, x1, y0, y1) = tile_bounds(t, frame.tiles_x, ts, w, h);
            let tw = x1 - x0;
            let mut px_state: Vec<Option<PixelBack>> = Vec::with_capacity(tw * (y1 - y0));
            let mut last = 0;
            for py in y0..y1 {
                for px in x0..x1 {
                    let i = py * w + px;
                    let gc = grads.color.pixel(px, py);
                    let t_final = frame.final_t[i];
                    let a_total = 1.0 - t_final;
                    // Depth output is N / A.
                    let (g_n, mut g_a) = match grads.depth {
                        Some(gd) if a_total > 0.0 => {
                            let d = gd.values[i];
                            let n = frame.depth_num[i];
                            (d / a_total, -d * n / (a_total * a_total))
                        }
                        _ => (0.0, 0.0),
                    };
                    if let Some(ga) = grads.alpha {
                        g_a += ga.values[i];
                    }
                    if (gc == [0.0; 3] && g_n == 0.0 && g_a == 0.0) || frame.visited[i] == 0 {
                        px_state.push(None);
                        continue;
                    }
                    last = last.max(frame.visited[i] as usize);
                    px_state.push(Some(PixelBack {
                        gc,
                        g_n,
                        g_a,
                        t_final,
                        tr: t_final,
                        behind: std::array::from_fn(|c| t_final * bg[c]),
                        behind_z: 0.0,
                        visited: frame.visited[i] as usize,
                    }));
                }
            }
            // Splat-major, back to front; each pixel sees its own entries in
            // reverse order.
            for j in (0..last).rev() {
                let s = &frame.splats[list[j] as usize];
                let Some((ux, uy)) = clip_rect(s, x0, x1, y0, y1) else {
                    continue;
                };
                let g = &mut acc[j];
                for py in uy.clone() {
                    for px in ux.clone() {
                        let Some(p) = &mut px_state[(py - y0) * tw + px - x0] else {
                            continue;
                        };
                        if j >= p.visited {
                            continue;
                        }
                        let Some((alpha, raw, dx, dy)) =
                            splat_alpha(s, px, py, settings.alpha_max)
                        else {
                            continue;
                        };
                        let one_m = 1.0 - alpha;
                        p.tr /= one_m;
                        let tr = p.tr;
                        let wgt = alpha * tr;
                        let mut g_alpha = 0.0;
                        for c in 0..3 {
                            g.color[c] += p.gc[c] * wgt;
                            g_alpha += p.gc[c] * (s.color[c] * tr - p.behind[c] / one_m);
                        }
                        g.depth += p.g_n * wgt;
                        g_alpha += p.g_n * (s.depth * tr - p.behind_z / one_m);
                        g_alpha += p.g_a * p.t_final / one_m;
                        for c in 0..3 {
                            p.behind[c] += s.color[c] * wgt;
                        }
                        p.behind_z += s.depth * wgt;

                        if raw < settings.alpha_max {
                            let gexp = raw / s.opacity;
                            g.opacity += g_alpha * gexp;
                            // alpha = o·exp(power)
                            let g_pow = g_alpha * raw;
                            let [a, b, c] = s.conic;
                            g.conic[0] += -0.5 * dx * dx * g_pow;
                            g.conic[1] += -dx * dy * g_pow;
                            g.conic[2] += -0.5 * dy * dy * g_pow;
                            g.mean[0] += (a * dx + b * dy) * g_pow;
                            g.mean[1] += (b * dx + c * dy) * g_pow;
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut splat_grads = vec![SplatGrad::default(); frame.splats.len()];
    for (t, acc) in per_tile.iter().enumerate() {
        for (j, g) in acc.iter().enumerate() {
            splat_grads[frame.tiles[t][j] as usize].add(g);
        }
    }

    let n = scene.len();
    let mut out = SceneGradients::zeros(n);
    let params: Vec<_> = frame
        .splats
        .par_iter()
        .zip(splat_grads.par_iter())
        .map(|(s, g)| project_backward(scene, s.index as usize, k, e, settings, g))
        .collect();
    for ((s, g), p) in frame.splats.iter().zip(&splat_grads).zip(params) {
        let i = s.index as usize;
        out.params[i] = p;
        out.mean2d[i] = g.mean;
        out.visible[i] = true;
    }
    out
}
