//! Progressive scene expansion and the incomplete-video training-pair harness.

mod pairs;

use std::time::Instant;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{depth_align, dilate, mask_from_alpha, median_scale, AlignmentParams};
use crate::error::{Error, Result, Stage};
use crate::geometry::{backproject, BinaryMask, CameraIntrinsics, CameraPose, DepthMap, Image, Plane, PointCloud};
use crate::interfaces::{check_completion, check_stereo, DenseStereo, ImageRefiner, ViewCompleter};
use crate::optimize::{fit, FitOptions, FitReport, LossWeights, OptimSettings, PerceptualLoss, TrainView};
use crate::splat::{render_with, GaussianScene, RenderSettings};
use crate::trajectory::{default_schedule, orbit_pose, plan, PlanContext, PlannerSpec, Trajectory, VIDEO_FRAMES};

pub use pairs::{make_training_pair, TrainingPair};

/// Which side of the alpha mask the dilation grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MaskDilation {
    /// Grow the region to be filled, so new points overlap the old boundary.
    #[default]
    Unknown,
    /// Grow the covered region, dropping thin slivers of new content.
    Known,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpansionConfig {
    pub schedule: Vec<PlannerSpec>,
    pub keyframes: usize,
    pub frames: usize,
    /// Fraction of the nearest reference depth a zoom-out may travel.
    pub safety: f64,
    /// Optimization steps after each integration.
    pub iterations: usize,
    pub refine_enabled: bool,
    pub refine_t: f64,
    pub refine_views: usize,
    pub refine_iters: usize,
    pub optim: OptimSettings,
    pub loss: LossWeights,
    pub alignment: AlignmentParams,
    pub mask_dilation: MaskDilation,
    pub render: RenderSettings,
    /// Reference pixels with at least this alpha count as fully known.
    pub reference_alpha: f64,
    /// Minimum fraction of fully known reference pixels.
    pub min_reference_coverage: f64,
    pub seed: u64,
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            schedule: default_schedule(),
            keyframes: 6,
            frames: VIDEO_FRAMES,
            safety: 0.8,
            iterations: 1000,
            refine_enabled: true,
            refine_t: 0.6,
            refine_views: 5,
            refine_iters: 1000,
            optim: OptimSettings::default(),
            loss: LossWeights::default(),
            alignment: AlignmentParams::default(),
            mask_dilation: MaskDilation::default(),
            render: RenderSettings::default(),
            reference_alpha: 0.99,
            min_reference_coverage: 0.5,
            seed: 42,
        }
    }
}

impl ExpansionConfig {
    pub fn validate(&self, path: &str) -> Result<()> {
        let p = |f: &str| format!("{path}.{f}");
        for (i, s) in self.schedule.iter().enumerate() {
            s.validate(&format!("{path}.schedule[{i}]"))?;
        }
        if self.frames < 2 {
            return Err(Error::config(p("frames"), "must be >= 2"));
        }
        if self.keyframes < 1 || self.keyframes > self.frames {
            return Err(Error::config(p("keyframes"), format!("must be in [1, {}]", self.frames)));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::config(p("safety"), "must be in (0, 1]"));
        }
        if !(self.refine_t > 0.0 && self.refine_t < 1.0) {
            return Err(Error::config(p("refine_t"), "must be in (0, 1)"));
        }
        if self.refine_enabled && self.refine_views == 0 {
            return Err(Error::config(p("refine_views"), "must be >= 1"));
        }
        if !(self.reference_alpha > 0.0 && self.reference_alpha <= 1.0) {
            return Err(Error::config(p("reference_alpha"), "must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.min_reference_coverage) {
            return Err(Error::config(p("min_reference_coverage"), "must be in [0, 1]"));
        }
        self.optim.validate(&p("optim"))?;
        self.loss.validate(&p("loss"))?;
        self.alignment.validate(&p("alignment"))?;
        self.render
            .validate()
            .map_err(|e| Error::config(p("render"), e.to_string()))
    }

    fn fit_options(&self, iterations: usize, stage: usize) -> FitOptions {
        FitOptions {
            iterations,
            optim: self.optim,
            loss: self.loss,
            render: self.render,
            seed: self.seed.wrapping_add(stage as u64),
            window: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitReport {
    pub points: usize,
    pub gaussians: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub trajectory_id: String,
    pub frames_rendered: usize,
    pub keyframes: Vec<usize>,
    pub depth_scale: f64,
    /// New points contributed by each keyframe.
    pub points_per_keyframe: Vec<usize>,
    pub points_added: usize,
    pub gaussians_before: usize,
    pub gaussians_after: usize,
    pub final_loss: f64,
    pub fit: FitReport,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineReport {
    pub views: usize,
    pub t: f64,
    pub iterations: usize,
    pub loss_before: f64,
    pub loss_after: f64,
    pub gaussians_after: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionReport {
    pub seed: u64,
    pub init: InitReport,
    pub stages: Vec<StageReport>,
    pub refine: Option<RefineReport>,
    pub wall_time_s: f64,
}

impl ExpansionReport {
    /// Everything except timings, for run-to-run comparison.
    pub fn counts(&self) -> Vec<(String, usize, usize, usize, u64)> {
        let mut out = vec![("init".to_string(), self.init.points, 0, self.init.gaussians, 0)];
        for s in &self.stages {
            out.push((
                s.trajectory_id.clone(),
                s.points_added,
                s.gaussians_before,
                s.gaussians_after,
                s.final_loss.to_bits(),
            ));
        }
        if let Some(r) = &self.refine {
            out.push(("refine".into(), 0, 0, r.gaussians_after, r.loss_after.to_bits()));
        }
        out
    }
}

/// The view everything else is expanded from.
#[derive(Debug, Clone)]
pub struct Reference {
    pub image: Image,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
    /// Centroid of the initial point cloud.
    pub centroid: Vector3<f64>,
}

/// Builds the initial scene from one image by running stereo on the image
/// paired with itself and back-projecting every valid depth.
pub fn init_scene(
    image: &Image,
    stereo: &dyn DenseStereo,
    k: &CameraIntrinsics,
    pose: &CameraPose,
) -> Result<(GaussianScene, Reference)> {
    k.validate()?;
    crate::error::ensure_same_dims("input image", image.dims(), k.dims())?;
    let frames = [image.clone(), image.clone()];
    let est = stereo
        .estimate(&frames, &[*pose, *pose], k)
        .map_err(|e| e.at(Stage::Stereo))?;
    check_stereo(&frames, &est).map_err(|e| e.at(Stage::Stereo))?;
    let depth = &est.depths[0];
    let mask = BinaryMask::from_values(
        depth.width,
        depth.height,
        depth.validity().to_vec(),
    )?;
    let cloud = backproject(depth, &mask, image, k, pose).map_err(|e| e.at(Stage::Backproject))?;
    let centroid = cloud
        .centroid()
        .ok_or_else(|| Error::EmptyInput("stereo returned no valid depth".into()).at(Stage::Init))?;
    Ok((
        GaussianScene::from_point_cloud(&cloud),
        Reference {
            image: image.clone(),
            pose: *pose,
            intrinsics: *k,
            centroid,
        },
    ))
}

/// `m` indices spread uniformly over `1..n`, ending at the last frame.
pub fn select_keyframes(n_frames: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > n_frames || n_frames < 2 {
        return Err(Error::param(format!(
            "cannot pick {m} keyframes from {n_frames} frames"
        )));
    }
    let last = (n_frames - 1) as f64;
    let mut out: Vec<usize> = (1..=m)
        .map(|k| (k as f64 * last / m as f64).round() as usize)
        .collect();
    out.dedup();
    if out.len() != m {
        return Err(Error::param(format!(
            "{m} keyframes do not fit in {n_frames} frames"
        )));
    }
    Ok(out)
}

/// Renders every pose of a trajectory.
pub fn render_video(
    scene: &GaussianScene,
    trajectory: &Trajectory,
    settings: &RenderSettings,
) -> Result<(Vec<Image>, Vec<Plane>)> {
    let outs = trajectory
        .poses
        .par_iter()
        .map(|p| render_with(scene, &trajectory.intrinsics, p, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(outs.into_iter().map(|o| (o.color, o.alpha)).unzip())
}

fn fill_mask(alpha: &Plane, cfg: &ExpansionConfig) -> Result<BinaryMask> {
    let unknown = mask_from_alpha(alpha, cfg.alignment.alpha_threshold)?;
    Ok(match cfg.mask_dilation {
        MaskDilation::Unknown => dilate(&unknown, cfg.alignment.dilation_iters),
        MaskDilation::Known => dilate(&unknown.not(), cfg.alignment.dilation_iters).not(),
    })
}

/// Median depth ratio between the scene and the stereo estimate on the
/// fully covered part of the reference view.
fn reference_scale(
    scene: &GaussianScene,
    reference: &Reference,
    estimated: &DepthMap,
    cfg: &ExpansionConfig,
) -> Result<f64> {
    let out = render_with(scene, &reference.intrinsics, &reference.pose, &cfg.render)?;
    let known = BinaryMask::from_values(
        out.alpha.width,
        out.alpha.height,
        out.alpha.values.iter().map(|a| *a >= cfg.reference_alpha).collect(),
    )?;
    let coverage = known.count() as f64 / known.values.len().max(1) as f64;
    if coverage < cfg.min_reference_coverage || known.count() == 0 {
        return Err(Error::DegenerateDepth(format!(
            "reference view only {:.1}% covered at alpha >= {}",
            100.0 * coverage,
            cfg.reference_alpha
        )));
    }
    median_scale(estimated, &out.depth.restricted(&known)?)
}

/// Adds points for the uncovered parts of the keyframes, then optimizes the
/// scene against every completed frame.
pub fn integrate(
    scene: &mut GaussianScene,
    completed: &[Image],
    trajectory: &Trajectory,
    stereo: &dyn DenseStereo,
    reference: &Reference,
    cfg: &ExpansionConfig,
    stage_index: usize,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<StageReport> {
    let started = Instant::now();
    let k = &trajectory.intrinsics;
    if completed.len() != trajectory.len() {
        return Err(Error::shape(format!(
            "{} completed frames for {} poses",
            completed.len(),
            trajectory.len()
        )));
    }
    let keyframes = select_keyframes(trajectory.len(), cfg.keyframes)?;
    let gaussians_before = scene.len();

    let mut frames = vec![reference.image.clone()];
    let mut hints = vec![reference.pose];
    for &i in &keyframes {
        frames.push(completed[i].clone());
        hints.push(trajectory.poses[i]);
    }
    let est = stereo
        .estimate(&frames, &hints, k)
        .map_err(|e| e.at(Stage::Stereo))?;
    check_stereo(&frames, &est).map_err(|e| e.at(Stage::Stereo))?;

    let scale = reference_scale(scene, reference, &est.depths[0], cfg).map_err(|e| e.at(Stage::Scale))?;

    let mut points_per_keyframe = Vec::with_capacity(keyframes.len());
    for (j, &i) in keyframes.iter().enumerate() {
        let pose = &trajectory.poses[i];
        let out = render_with(scene, k, pose, &cfg.render).map_err(|e| e.at(Stage::Render))?;
        let mask = fill_mask(&out.alpha, cfg).map_err(|e| e.at(Stage::Align))?;
        if mask.count() == 0 {
            points_per_keyframe.push(0);
            continue;
        }
        let aligned = depth_align(&est.depths[j + 1], &out.depth, &mask, scale, &cfg.alignment)
            .map_err(|e| e.at(Stage::Align))?;
        let usable = BinaryMask::from_values(
            mask.width,
            mask.height,
            mask.values
                .iter()
                .zip(aligned.validity())
                .map(|(m, v)| *m && *v)
                .collect(),
        )?;
        let cloud: PointCloud = backproject(&aligned, &usable, &completed[i], k, pose)
            .map_err(|e| e.at(Stage::Backproject))?;
        points_per_keyframe.push(cloud.len());
        scene.append(&GaussianScene::from_point_cloud(&cloud));
    }
    let points_added = points_per_keyframe.iter().sum();

    let views: Vec<TrainView> = trajectory
        .poses
        .iter()
        .zip(completed)
        .map(|(p, f)| TrainView {
            pose: *p,
            target: f.clone(),
        })
        .collect();
    let fit_report = fit(
        scene,
        k,
        &views,
        &cfg.fit_options(cfg.iterations, stage_index),
        perceptual,
    )
    .map_err(|e| e.at(Stage::Optimize))?;
    Ok(StageReport {
        trajectory_id: String::new(),
        frames_rendered: trajectory.len(),
        keyframes,
        depth_scale: scale,
        points_per_keyframe,
        points_added,
        gaussians_before,
        gaussians_after: scene.len(),
        final_loss: fit_report.final_loss,
        fit: fit_report,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// `n` views turning in place about the start camera's up axis, evenly
/// spaced over a full turn.
pub fn panorama_poses(start: &CameraPose, n: usize) -> Vec<CameraPose> {
    let c = start.center();
    (0..n)
        .map(|k| orbit_pose(start, &c, 360.0 * k as f64 / n as f64))
        .collect()
}

/// Renders the panorama views, refines them, and fits the scene to the
/// refined images.
pub fn refine(
    scene: &mut GaussianScene,
    refiner: &dyn ImageRefiner,
    reference: &Reference,
    cfg: &ExpansionConfig,
    perceptual: Option<&dyn PerceptualLoss>,
) -> Result<Option<RefineReport>> {
    if !cfg.refine_enabled {
        return Ok(None);
    }
    let started = Instant::now();
    let k = &reference.intrinsics;
    let poses = panorama_poses(&reference.pose, cfg.refine_views);
    let mut views = Vec::with_capacity(poses.len());
    for p in &poses {
        let out = render_with(scene, k, p, &cfg.render).map_err(|e| e.at(Stage::Render))?;
        let refined = refiner
            .refine(&out.color, cfg.refine_t)
            .map_err(|e| e.at(Stage::Refine))?;
        crate::error::ensure_same_dims("refined image", refined.dims(), out.color.dims())
            .map_err(|e| e.at(Stage::Refine))?;
        views.push(TrainView {
            pose: *p,
            target: refined,
        });
    }
    let opts = cfg.fit_options(cfg.refine_iters, cfg.schedule.len() + 1);
    let loss_before = crate::optimize::evaluate_loss(scene, k, &views, &cfg.loss, &cfg.render, perceptual)?;
    let report = fit(scene, k, &views, &opts, perceptual).map_err(|e| e.at(Stage::Optimize))?;
    Ok(Some(RefineReport {
        views: views.len(),
        t: cfg.refine_t,
        iterations: cfg.refine_iters,
        loss_before,
        loss_after: report.final_loss,
        gaussians_after: scene.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
    }))
}

/// Neural stages used by [`run_pipeline`].
pub struct Stages<'a> {
    pub completer: &'a dyn ViewCompleter,
    pub stereo: &'a dyn DenseStereo,
    pub refiner: &'a dyn ImageRefiner,
    pub perceptual: Option<&'a dyn PerceptualLoss>,
}

/// Plans the trajectory for one schedule entry.
pub fn plan_stage(
    spec: &PlannerSpec,
    scene: &GaussianScene,
    reference: &Reference,
    cfg: &ExpansionConfig,
) -> Result<Trajectory> {
    let out = render_with(scene, &reference.intrinsics, &reference.pose, &cfg.render)?;
    let ctx = PlanContext {
        start: &reference.pose,
        intrinsics: reference.intrinsics,
        reference_depth: &out.depth,
        centroid: reference.centroid,
        safety: cfg.safety,
        frames: cfg.frames,
    };
    plan(spec, &ctx)
}

/// Expands `scene` through the configured schedule.
///
/// On error the scene holds the result of the last completed stage.
pub fn expand_scene(
    scene: &mut GaussianScene,
    reference: &Reference,
    cfg: &ExpansionConfig,
    stages: &Stages<'_>,
    report: &mut ExpansionReport,
) -> Result<()> {
    cfg.validate("expansion")?;
    for (si, spec) in cfg.schedule.iter().enumerate() {
        let traj = plan_stage(spec, scene, reference, cfg).map_err(|e| e.at(Stage::Render))?;
        let (frames, alphas) = render_video(scene, &traj, &cfg.render).map_err(|e| e.at(Stage::Render))?;
        let completed = stages
            .completer
            .complete(&frames, &alphas, &traj)
            .map_err(|e| e.at(Stage::Complete))?;
        check_completion(&frames, &completed).map_err(|e| e.at(Stage::Complete))?;
        let mut work = scene.clone();
        let mut stage = integrate(
            &mut work,
            &completed,
            &traj,
            stages.stereo,
            reference,
            cfg,
            si + 1,
            stages.perceptual,
        )?;
        *scene = work;
        stage.trajectory_id = spec.id();
        report.stages.push(stage);
    }
    if cfg.refine_enabled {
        let mut work = scene.clone();
        report.refine = refine(&mut work, stages.refiner, reference, cfg, stages.perceptual)?;
        *scene = work;
    }
    Ok(())
}

/// Initializes from `image`, then expands through the schedule.
pub fn run_pipeline(
    image: &Image,
    k: &CameraIntrinsics,
    reference_pose: &CameraPose,
    cfg: &ExpansionConfig,
    stages: &Stages<'_>,
) -> Result<(GaussianScene, ExpansionReport)> {
    cfg.validate("expansion")?;
    let started = Instant::now();
    let (mut scene, reference) = init_scene(image, stages.stereo, k, reference_pose)?;
    let mut report = ExpansionReport {
        seed: cfg.seed,
        init: InitReport {
            points: scene.len(),
            gaussians: scene.len(),
        },
        stages: Vec::new(),
        refine: None,
        wall_time_s: 0.0,
    };
    expand_scene(&mut scene, &reference, cfg, stages, &mut report)?;
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok((scene, report))
}
