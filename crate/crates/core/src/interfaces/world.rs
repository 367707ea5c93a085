use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::rng::{stream, streams};
use crate::splat::{render_with, Gaussian, GaussianScene, RenderOutput, RenderSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldParams {
    pub seed: u64,
    /// Walls sit at ±half_size on every axis.
    pub half_size: f64,
    /// Distance between neighbouring surface Gaussians.
    pub spacing: f64,
    /// Edge length of checkerboard squares.
    pub checker: f64,
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            seed: 42,
            half_size: 2.5,
            spacing: 0.0625,
            checker: 0.5,
            width: 360,
            height: 240,
            hfov_deg: 60.0,
        }
    }
}

/// A closed, textured room with a few boxes, built from flat Gaussians.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub params: WorldParams,
    pub scene: GaussianScene,
    pub intrinsics: CameraIntrinsics,
    /// Camera of the single input image.
    pub start_pose: CameraPose,
    pub render_settings: RenderSettings,
}

struct BoxSpec {
    center: [f64; 3],
    half: [f64; 3],
    colors: [[f64; 3]; 2],
}

fn boxes() -> Vec<BoxSpec> {
    vec![
        BoxSpec {
            center: [1.2, 1.25, 1.3],
            half: [0.5, 1.25, 0.5],
            colors: [[0.85, 0.25, 0.2], [0.95, 0.85, 0.3]],
        },
        BoxSpec {
            center: [-1.3, 1.0, 0.9],
            half: [0.4, 1.5, 0.4],
            colors: [[0.2, 0.45, 0.85], [0.9, 0.9, 0.95]],
        },
        BoxSpec {
            center: [1.0, 1.4, -1.6],
            half: [0.6, 1.1, 0.5],
            colors: [[0.25, 0.7, 0.3], [0.1, 0.2, 0.1]],
        },
        BoxSpec {
            center: [-2.1, 0.2, -0.6],
            half: [0.4, 0.3, 0.7],
            colors: [[0.6, 0.3, 0.75], [0.95, 0.6, 0.8]],
        },
    ]
}

/// Wall base colours in order -x, +x, -y (ceiling), +y (floor), -z, +z.
const WALL_COLORS: [[f64; 3]; 6] = [
    [0.8, 0.55, 0.35],
    [0.35, 0.6, 0.75],
    [0.9, 0.9, 0.85],
    [0.55, 0.45, 0.4],
    [0.5, 0.75, 0.5],
    [0.85, 0.8, 0.45],
];

impl SyntheticWorld {
    pub fn new(params: WorldParams) -> Result<Self> {
        if !(params.spacing > 0.0 && params.checker >= 2.0 * params.spacing && params.half_size >= params.checker)
        {
            return Err(Error::param(format!("invalid world parameters {params:?}")));
        }
        let intrinsics = CameraIntrinsics::from_fov(params.hfov_deg, params.width, params.height)?;
        let mut rng = stream(params.seed, streams::WORLD);
        let mut scene = GaussianScene::new();
        let hs = params.half_size;
        let cells = ((2.0 * hs / params.checker).round() as usize).max(1);

        for (wall, base) in WALL_COLORS.iter().enumerate() {
            let axis = wall / 2;
            let sign = if wall % 2 == 0 { -1.0 } else { 1.0 };
            let mut origin = [-hs; 3];
            origin[axis] = sign * hs;
            tile_face(
                &mut scene,
                &mut rng,
                Face {
                    origin,
                    axis,
                    extent: [2.0 * hs; 2],
                    cells: [cells; 2],
                    spacing: params.spacing,
                    colors: [*base, base.map(|c| c * 0.45)],
                },
            );
        }

        for bx in boxes() {
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    // Faces resting on the floor are never visible.
                    if axis == 1 && sign > 0.0 && bx.center[1] + bx.half[1] >= hs - 1e-9 {
                        continue;
                    }
                    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
                    let mut origin = bx.center;
                    origin[axis] += sign * bx.half[axis];
                    origin[a] -= bx.half[a];
                    origin[b] -= bx.half[b];
                    let extent = [2.0 * bx.half[a], 2.0 * bx.half[b]];
                    let tile = 0.5 * params.checker;
                    tile_face(
                        &mut scene,
                        &mut rng,
                        Face {
                            origin,
                            axis,
                            extent,
                            cells: extent.map(|e| ((e / tile).round() as usize).max(1)),
                            spacing: params.spacing,
                            colors: bx.colors,
                        },
                    );
                }
            }
        }
        scene.validate()?;
        Ok(Self {
            params,
            scene,
            intrinsics,
            start_pose: CameraPose::from_center(Matrix3::identity(), Vector3::new(0.0, 0.0, -0.5)),
            render_settings: RenderSettings::default(),
        })
    }

    /// The seed-42 default room.
    pub fn default_world() -> Self {
        Self::new(WorldParams::default()).expect("default world parameters are valid")
    }

    pub fn render(&self, pose: &CameraPose) -> Result<RenderOutput> {
        self.render_with(&self.intrinsics, pose)
    }

    pub fn render_with(&self, k: &CameraIntrinsics, pose: &CameraPose) -> Result<RenderOutput> {
        render_with(&self.scene, k, pose, &self.render_settings)
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        p.iter().all(|c| c.abs() < self.params.half_size)
    }
}

fn jitter<R: Rng>(rng: &mut R, c: [f64; 3]) -> [f64; 3] {
    let d: f64 = rng.random_range(-0.04..0.04);
    c.map(|v| (v + d).clamp(0.0, 1.0))
}

/// A planar rectangle split into checkered tiles.
struct Face {
    /// Corner with the smallest in-plane coordinates.
    origin: [f64; 3],
    /// Normal axis.
    axis: usize,
    extent: [f64; 2],
    cells: [usize; 2],
    spacing: f64,
    colors: [[f64; 3]; 2],
}

/// Fills each tile with a grid of same-coloured Gaussians, leaving one grid
/// step of grout between tiles. Only same-coloured Gaussians overlap
/// noticeably, so the composite does not depend on their depth order.
fn tile_face<R: Rng>(scene: &mut GaussianScene, rng: &mut R, f: Face) {
    let (a, b) = ((f.axis + 1) % 3, (f.axis + 2) % 3);
    let tile = [f.extent[0] / f.cells[0] as f64, f.extent[1] / f.cells[1] as f64];
    let per = tile.map(|t| ((t / f.spacing).round() as usize).max(2));
    let step = [tile[0] / per[0] as f64, tile[1] / per[1] as f64];
    let sigma = TILE_SIGMA * step[0].max(step[1]);
    for ca in 0..f.cells[0] {
        for cb in 0..f.cells[1] {
            let color = jitter(rng, f.colors[(ca + cb) % 2]);
            for i in 1..per[0] {
                for j in 1..per[1] {
                    let mut p = f.origin;
                    p[a] += ca as f64 * tile[0] + i as f64 * step[0];
                    p[b] += cb as f64 * tile[1] + j as f64 * step[1];
                    scene.push(surface_gaussian(p, f.axis, sigma, color));
                }
            }
        }
    }
}

/// In-plane standard deviation relative to the grid step.
const TILE_SIGMA: f64 = 0.6;

fn surface_gaussian(center: [f64; 3], normal_axis: usize, sigma: f64, color: [f64; 3]) -> Gaussian {
    let mut scale = [sigma; 3];
    scale[normal_axis] = 0.1 * sigma;
    Gaussian {
        center,
        color,
        opacity: 0.99,
        scale,
        rotation: [1.0, 0.0, 0.0, 0.0],
    }
}
