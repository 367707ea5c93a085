//! Renders the synthetic room from its start camera and writes color, depth
//! and coverage images.
//!
//! Usage: `cargo run --release --example render_world [out_dir]`

use std::path::PathBuf;

use scene_forge::cli::files::{write_alpha, write_depth, write_rgb};
use scene_forge::interfaces::SyntheticWorld;

fn main() -> scene_forge::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "render_world".into()));
    std::fs::create_dir_all(&out)?;
    let world = SyntheticWorld::default_world();
    let frame = world.render(&world.start_pose)?;
    write_rgb(&out.join("color.png"), &frame.color)?;
    write_depth(&out.join("depth.png"), &frame.depth)?;
    write_alpha(&out.join("alpha.png"), &frame.alpha)?;

    let depths: Vec<f64> = frame.depth.valid_values().collect();
    let (lo, hi) = depths
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    println!(
        "{} gaussians, {}x{} image, depth {lo:.2}..{hi:.2} m, written to {}",
        world.scene.len(),
        world.intrinsics.width,
        world.intrinsics.height,
        out.display()
    );
    Ok(())
}
