//! Loads a pipeline config from JSON, builds the initial scene it describes,
//! and round-trips that scene through the PLY format.
//!
//! Usage: `cargo run --release --example config_and_persistence`

use scene_forge::cli::{load_scene, reference_from_scene, save_scene, PipelineConfig};
use scene_forge::expand::init_scene;

const CONFIG: &str = r#"{
  "schema_version": 1,
  "seed": 7,
  "world": {"width": 120, "height": 80, "spacing": 0.125},
  "expansion": {"iterations": 200, "keyframes": 4},
  "stereo": {"kind": "oracle", "scale": 1.5}
}"#;

fn main() -> scene_forge::Result<()> {
    let cfg = PipelineConfig::from_json(CONFIG)?;
    println!("seed {} drives {} schedule stages", cfg.seed, cfg.expansion().schedule.len());

    match PipelineConfig::from_json(r#"{"schema_version": 1, "expansion": {"safety": 2}}"#) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }

    let world = cfg.world()?;
    let stereo = cfg.stereo(&world)?;
    let k = cfg.camera.intrinsics(cfg.world.width, cfg.world.height)?;
    let input = world.render(&cfg.camera.pose())?.color;
    let (scene, _) = init_scene(&input, stereo.as_ref(), &k, &cfg.camera.pose())?;

    let dir = std::env::temp_dir().join("scene-forge-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("init.ply");
    save_scene(&scene, &path)?;
    let back = load_scene(&path)?;
    println!(
        "{} gaussians, {} bytes on disk, identical after reload: {}",
        scene.len(),
        std::fs::metadata(&path)?.len(),
        back.fingerprint() == scene.fingerprint()
    );
    let reference = reference_from_scene(&back, &cfg, None, &k)?;
    println!(
        "reference centroid ({:.3}, {:.3}, {:.3}) in the stereo's units",
        reference.centroid.x, reference.centroid.y, reference.centroid.z
    );
    Ok(())
}
