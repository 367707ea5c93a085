//! Expands the synthetic room from its start view with oracle completion and
//! stereo, then scores 16 held-out views around the room.
//!
//! Usage: `cargo run --release --example expand_synthetic [iterations] [refine]`
//!
//! Passing `refine` as the second argument adds the final refinement pass.

use std::sync::Arc;

use nalgebra::Vector3;
use scene_forge::eval::{psnr, ssim};
use scene_forge::expand::{run_pipeline, ExpansionConfig, Stages};
use scene_forge::interfaces::{identity_refiner, oracle_completer, oracle_stereo, SyntheticWorld};
use scene_forge::splat::render_with;
use scene_forge::trajectory::{orbit_pose, PivotSpec, PlannerSpec};

fn main() -> scene_forge::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("iterations must be an integer"))
        .unwrap_or(1000);
    let world = Arc::new(SyntheticWorld::default_world());
    let pivot = PivotSpec::Ahead { distance: 0.5 };
    let config = ExpansionConfig {
        schedule: vec![
            PlannerSpec::ZoomOut { travel: None },
            PlannerSpec::Orbit { angle_deg: 180.0, pivot },
            PlannerSpec::Orbit { angle_deg: -180.0, pivot },
        ],
        iterations,
        refine_iters: iterations,
        refine_enabled: std::env::args().nth(2).as_deref() == Some("refine"),
        ..Default::default()
    };
    let input = world.render(&world.start_pose)?.color;
    let completer = oracle_completer(world.clone());
    let stereo = oracle_stereo(world.clone());
    let refiner = identity_refiner();
    let stages = Stages {
        completer: &completer,
        stereo: &stereo,
        refiner: &refiner,
        perceptual: None,
    };
    let (scene, report) = run_pipeline(&input, &world.intrinsics, &world.start_pose, &config, &stages)?;
    for s in &report.stages {
        println!(
            "{:<10} +{:>6} points  {:>6} -> {:>6} gaussians  loss {:.4}  {:.1}s",
            s.trajectory_id, s.points_added, s.gaussians_before, s.gaussians_after, s.final_loss, s.wall_time_s
        );
    }

    let center = world.start_pose.center() + world.start_pose.forward() * 0.5;
    let pivot: Vector3<f64> = center;
    let (mut p_sum, mut s_sum) = (0.0, 0.0);
    for k in 0..16 {
        let pose = orbit_pose(&world.start_pose, &pivot, 22.5 * k as f64 + 1.875);
        let pred = render_with(&scene, &world.intrinsics, &pose, &config.render)?.color;
        let gt = world.render(&pose)?.color;
        let (p, s) = (psnr(&pred, &gt)?, ssim(&pred, &gt)?);
        println!("view {k:>2}: psnr {p:.2} dB  ssim {s:.4}");
        p_sum += p;
        s_sum += s;
    }
    println!("mean: psnr {:.2} dB  ssim {:.4}  total {:.1}s", p_sum / 16.0, s_sum / 16.0, report.wall_time_s);
    Ok(())
}
