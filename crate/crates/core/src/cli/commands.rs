use std::fs;
use std::path::Path;

use serde_json::json;

use super::config::{PipelineConfig, TrajectorySpec};
use super::files::{
    frame_name, read_frames, read_poses, read_rgb, write_alpha, write_depth, write_poses, write_rgb,
};
use super::ply::{load_scene, save_scene};
use super::Log;
use crate::error::{Error, Result, Stage};
use crate::eval::{evaluate, MetricReport};
use crate::expand::{
    expand_scene, init_scene, make_training_pair, plan_stage, ExpansionReport, InitReport, Reference, Stages,
};
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::splat::{render_with, GaussianScene};
use crate::trajectory::Trajectory;

fn input_image(cfg: &PipelineConfig, image: Option<&Path>, log: Log) -> Result<(crate::geometry::Image, CameraIntrinsics)> {
    match image {
        Some(p) => {
            let img = read_rgb(p)?;
            let k = cfg.camera.intrinsics(img.width, img.height)?;
            Ok((img, k))
        }
        None => {
            log.info("no input image: rendering the synthetic world");
            let world = cfg.world()?;
            let k = cfg.camera.intrinsics(cfg.world.width, cfg.world.height)?;
            let img = world.render_with(&k, &cfg.camera.pose())?.color;
            Ok((img, k))
        }
    }
}

/// Reference view for a saved scene: the configured camera, looking at the
/// scene's own render unless the original image is supplied.
pub fn reference_from_scene(
    scene: &GaussianScene,
    cfg: &PipelineConfig,
    image: Option<crate::geometry::Image>,
    k: &CameraIntrinsics,
) -> Result<Reference> {
    let pose = cfg.camera.pose();
    let image = match image {
        Some(img) => img,
        None => render_with(scene, k, &pose, &cfg.expansion.render)?.color,
    };
    let centroid = scene
        .centroid()
        .ok_or_else(|| Error::EmptyInput("scene has no Gaussians".into()).at(Stage::Init))?;
    Ok(Reference {
        image,
        pose,
        intrinsics: *k,
        centroid,
    })
}

pub fn cmd_init(cfg: &PipelineConfig, image: Option<&Path>, out: &Path, log: Log) -> Result<()> {
    let (img, k) = input_image(cfg, image, log)?;
    let world = cfg.world()?;
    let stereo = cfg.stereo(&world)?;
    let (scene, _) = init_scene(&img, stereo.as_ref(), &k, &cfg.camera.pose())?;
    log.info(format!("initial scene: {} gaussians", scene.len()));
    save_scene(&scene, out)
}

pub fn cmd_expand(
    cfg: &PipelineConfig,
    scene_path: &Path,
    image: Option<&Path>,
    out: &Path,
    report_path: &Path,
    log: Log,
) -> Result<()> {
    let mut scene = load_scene(scene_path)?;
    let (img, k) = match image {
        Some(p) => {
            let img = read_rgb(p)?;
            let k = cfg.camera.intrinsics(img.width, img.height)?;
            (Some(img), k)
        }
        None => (None, cfg.camera.intrinsics(cfg.world.width, cfg.world.height)?),
    };
    let reference = reference_from_scene(&scene, cfg, img, &k)?;
    let world = cfg.world()?;
    let completer = cfg.completer(&world)?;
    let stereo = cfg.stereo(&world)?;
    let refiner = cfg.refiner()?;
    let stages = Stages {
        completer: completer.as_ref(),
        stereo: stereo.as_ref(),
        refiner: refiner.as_ref(),
        perceptual: None,
    };
    let expansion = cfg.expansion();
    let started = std::time::Instant::now();
    let mut report = ExpansionReport {
        seed: expansion.seed,
        init: InitReport {
            points: 0,
            gaussians: scene.len(),
        },
        stages: Vec::new(),
        refine: None,
        wall_time_s: 0.0,
    };
    let result = expand_scene(&mut scene, &reference, &expansion, &stages, &mut report);
    report.wall_time_s = started.elapsed().as_secs_f64();
    for s in &report.stages {
        log.info(format!(
            "{}: +{} points, {} gaussians, loss {:.4}",
            s.trajectory_id, s.points_added, s.gaussians_after, s.final_loss
        ));
    }
    let mut doc = serde_json::to_value(&report).expect("report serializes");
    if let Err(e) = &result {
        doc["error"] = super::error_json(e)["error"].clone();
    }
    fs::write(report_path, serde_json::to_string_pretty(&doc).expect("report serializes"))?;
    result?;
    save_scene(&scene, out)
}

fn trajectory_spec(cfg: &PipelineConfig, path: Option<&Path>) -> Result<TrajectorySpec> {
    match path {
        None => Ok(cfg.trajectory.clone()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let spec: TrajectorySpec = serde_json::from_str(&text).map_err(|e| Error::Config {
                path: p.display().to_string(),
                message: format!("not a trajectory: {e}"),
            })?;
            let mut check = cfg.clone();
            check.trajectory = spec.clone();
            check.validate()?;
            Ok(spec)
        }
    }
}

fn resolve_trajectory(
    spec: &TrajectorySpec,
    scene: &GaussianScene,
    cfg: &PipelineConfig,
    k: &CameraIntrinsics,
) -> Result<Trajectory> {
    match spec {
        TrajectorySpec::Explicit(e) => {
            let poses = e
                .poses
                .iter()
                .map(|r| CameraPose::from_row_major(r.rotation, r.translation))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Config {
                    path: "$.trajectory.poses".into(),
                    message: e.to_string(),
                })?;
            Trajectory::new(poses, *k)
        }
        TrajectorySpec::Planned(p) => {
            let reference = reference_from_scene(scene, cfg, None, k)?;
            plan_stage(p, scene, &reference, &cfg.expansion)
        }
    }
}

fn scene_or_world(cfg: &PipelineConfig, scene: Option<&Path>) -> Result<GaussianScene> {
    match scene {
        Some(p) => load_scene(p),
        None => Ok(cfg.world()?.scene.clone()),
    }
}

pub fn cmd_render(
    cfg: &PipelineConfig,
    scene_path: Option<&Path>,
    trajectory: Option<&Path>,
    out_dir: &Path,
    log: Log,
) -> Result<()> {
    let spec = trajectory_spec(cfg, trajectory)?;
    let scene = scene_or_world(cfg, scene_path)?;
    let k = cfg.camera.intrinsics(cfg.world.width, cfg.world.height)?;
    let traj = resolve_trajectory(&spec, &scene, cfg, &k)?;
    fs::create_dir_all(out_dir)?;
    for (i, pose) in traj.poses.iter().enumerate() {
        let out = render_with(&scene, &k, pose, &cfg.expansion.render).map_err(|e| e.at(Stage::Render))?;
        write_rgb(&out_dir.join(frame_name("frame", i)), &out.color)?;
        write_depth(&out_dir.join(frame_name("depth", i)), &out.depth)?;
        write_alpha(&out_dir.join(frame_name("alpha", i)), &out.alpha)?;
    }
    write_poses(&out_dir.join("poses.json"), &traj.poses)?;
    fs::write(
        out_dir.join("intrinsics.json"),
        serde_json::to_string_pretty(&json!(k)).expect("intrinsics serialize"),
    )?;
    log.info(format!("rendered {} frames to {}", traj.len(), out_dir.display()));
    Ok(())
}

pub fn cmd_eval(pred_dir: &Path, gt_dir: &Path, poses: Option<(&Path, &Path)>) -> Result<MetricReport> {
    let pred = read_frames(pred_dir, "frame")?;
    let gt = read_frames(gt_dir, "frame")?;
    match poses {
        Some((p, g)) => {
            let (p, g) = (read_poses(p)?, read_poses(g)?);
            evaluate(&pred, &gt, Some((&p, &g)))
        }
        None => evaluate(&pred, &gt, None),
    }
}

pub fn cmd_make_pairs(
    cfg: &PipelineConfig,
    scene_path: Option<&Path>,
    trajectory: Option<&Path>,
    start_frame: usize,
    out_dir: &Path,
    log: Log,
) -> Result<()> {
    let spec = trajectory_spec(cfg, trajectory)?;
    let scene = scene_or_world(cfg, scene_path)?;
    let k = cfg.camera.intrinsics(cfg.world.width, cfg.world.height)?;
    let traj = resolve_trajectory(&spec, &scene, cfg, &k)?;
    let pair = make_training_pair(&scene, &traj, start_frame, &cfg.expansion.render)?;
    fs::create_dir_all(out_dir)?;
    for i in 0..traj.len() {
        write_rgb(&out_dir.join(frame_name("gt", i)), &pair.ground_truth[i])?;
        write_rgb(&out_dir.join(frame_name("incomplete", i)), &pair.incomplete[i])?;
        write_alpha(&out_dir.join(frame_name("alpha", i)), &pair.alphas[i])?;
    }
    write_poses(&out_dir.join("poses.json"), &traj.poses)?;
    log.info(format!("wrote {} frame pairs to {}", traj.len(), out_dir.display()));
    Ok(())
}
