//! Builds a (complete, incomplete) video pair for training a view completer
//! and prints how coverage falls off along a zoom-out.
//!
//! Usage: `cargo run --release --example training_pairs`

use scene_forge::eval::psnr;
use scene_forge::expand::make_training_pair;
use scene_forge::interfaces::SyntheticWorld;
use scene_forge::splat::render;
use scene_forge::trajectory::{collision_bound, plan_zoom_out};

fn main() -> scene_forge::Result<()> {
    let world = SyntheticWorld::default_world();
    let depth = render(&world.scene, &world.intrinsics, &world.start_pose)?.depth;
    let travel = collision_bound(&depth, 0.8)?;
    let traj = plan_zoom_out(&world.start_pose, travel, 49, world.intrinsics)?;
    let pair = make_training_pair(&world.scene, &traj, 0, &world.render_settings)?;
    for i in (0..traj.len()).step_by(8) {
        let alpha = &pair.alphas[i];
        let covered = alpha.values.iter().filter(|a| **a >= 0.5).count() as f64 / alpha.values.len() as f64;
        println!(
            "frame {i:>2}: {:>5.1}% covered, incomplete vs complete {:.2} dB",
            100.0 * covered,
            psnr(&pair.incomplete[i], &pair.ground_truth[i])?
        );
    }
    Ok(())
}
