//! Brings a wrongly scaled depth estimate of a zoomed-out view into the
//! scene's units and measures the error on the newly revealed border.
//!
//! Usage: `cargo run --release --example align_depth [scale]`

use std::sync::Arc;

use scene_forge::depth::{depth_align, dilate, mask_from_alpha, median_scale, AlignmentParams};
use scene_forge::expand::init_scene;
use scene_forge::geometry::{median, BinaryMask};
use scene_forge::interfaces::{oracle_stereo, DenseStereo, SyntheticWorld};
use scene_forge::splat::render;
use scene_forge::trajectory::{collision_bound, plan_zoom_out};

fn main() -> scene_forge::Result<()> {
    let s: f64 = std::env::args()
        .nth(1)
        .map(|v| v.parse().expect("scale must be a number"))
        .unwrap_or(2.5);
    let world = Arc::new(SyntheticWorld::default_world());
    let (k, start) = (world.intrinsics, world.start_pose);
    let input = world.render(&start)?.color;
    let (scene, _) = init_scene(&input, &oracle_stereo(world.clone()), &k, &start)?;

    let ref_render = render(&scene, &k, &start)?;
    let travel = collision_bound(&ref_render.depth, 0.8)?;
    let traj = plan_zoom_out(&start, travel, 49, k)?;
    let end = *traj.last();
    println!("zoom-out travel {travel:.3} m");

    let stereo = oracle_stereo(world.clone()).with_scale(s)?;
    let frames = [input, world.render(&end)?.color];
    let est = stereo.estimate(&frames, &[start, end], &k)?;
    let known = BinaryMask::from_values(
        k.width,
        k.height,
        ref_render.alpha.values.iter().map(|a| *a >= 0.99).collect(),
    )?;
    let scale = median_scale(&est.depths[0], &ref_render.depth.restricted(&known)?)?;
    println!("stereo scale {s}, recovered factor {scale:.6} (expected {:.6})", 1.0 / s);

    let params = AlignmentParams::default();
    let out = render(&scene, &k, &end)?;
    let unknown = dilate(&mask_from_alpha(&out.alpha, params.alpha_threshold)?, params.dilation_iters);
    let aligned = depth_align(&est.depths[1], &out.depth, &unknown, scale, &params)?;
    let truth = world.render(&end)?.depth;
    let mut errors: Vec<f64> = (0..unknown.values.len())
        .filter(|&i| unknown.values[i] && aligned.is_valid(i) && truth.is_valid(i))
        .map(|i| (aligned.values()[i] - truth.values()[i]).abs() / truth.values()[i])
        .collect();
    println!(
        "{} of {} pixels to fill, median relative depth error {:.4}%",
        unknown.count(),
        unknown.values.len(),
        100.0 * median(&mut errors).unwrap_or(f64::NAN)
    );
    Ok(())
}
