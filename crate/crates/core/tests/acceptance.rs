//! Acceptance criteria A1 to A9. Each prints one `PASS` or `FAIL` line and
//! the process exits nonzero if any fails.
//!
//! Pass criterion ids (`A3 A9`) as arguments to run a subset. A1 and A8
//! share one pipeline run and are selected together by either id.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scene_forge::cli::ply::{read_scene, write_scene};
use scene_forge::depth::{depth_align, dilate, mask_from_alpha, median_scale};
use scene_forge::eval::{camera_error, psnr, ssim};
use scene_forge::expand::{
    plan_stage, run_pipeline, select_keyframes, ExpansionConfig, ExpansionReport, Reference, Stages,
};
use scene_forge::geometry::{
    project, rotation_angle_between, unproject_pixel, BinaryMask, CameraIntrinsics, CameraPose,
    DepthMap, Image,
};
use scene_forge::interfaces::{
    identity_refiner, oracle_completer, oracle_stereo, DenseStereo, SyntheticWorld,
};
use scene_forge::optimize::{fit, ssim_loss, FitOptions, TrainView};
use scene_forge::splat::{
    logit, normalize_quat, render_backward, render_cached, render_with, GaussianScene, OutputGrads,
    RenderSettings,
};
use scene_forge::trajectory::{
    interpolate, orbit_pose, plan_orbit, plan_zoom_out, PivotSpec, PlannerSpec, PositionMode,
};

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(id: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { id, pass, detail }
}

type Criterion = fn() -> Vec<Outcome>;

fn main() -> ExitCode {
    let wanted: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .map(|a| a.to_uppercase())
        .collect();
    let criteria: [(&[&str], Criterion); 8] = [
        (&["A2"], a2_gradients),
        (&["A3"], a3_geometry),
        (&["A4"], a4_scale_recovery),
        (&["A5"], a5_trajectories),
        (&["A6"], a6_camera_error),
        (&["A7"], a7_self_reconstruction),
        (&["A9"], a9_persistence),
        (&["A1", "A8"], a1_a8_pipeline),
    ];
    let mut failed = 0;
    for (ids, run) in criteria {
        if !wanted.is_empty() && !ids.iter().any(|id| wanted.iter().any(|w| w == id)) {
            continue;
        }
        let started = Instant::now();
        for o in run() {
            println!(
                "{} {}: {} ({:.1}s)",
                o.id,
                if o.pass { "PASS" } else { "FAIL" },
                o.detail,
                started.elapsed().as_secs_f64()
            );
            failed += usize::from(!o.pass);
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_rotation(r: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let v = Vector4::new(
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(v / n));
            return *q.to_rotation_matrix().matrix();
        }
    }
}

fn random_vec(r: &mut impl Rng, half: f64) -> Vector3<f64> {
    Vector3::new(
        r.random_range(-half..half),
        r.random_range(-half..half),
        r.random_range(-half..half),
    )
}

// ---------------------------------------------------------------- A1 + A8

const A1_PSNR: f64 = 30.0;
const A1_SSIM: f64 = 0.90;
/// Ten minutes on eight cores.
const A1_CORE_SECONDS: f64 = 600.0 * 8.0;

fn a1_config() -> ExpansionConfig {
    let pivot = PivotSpec::Ahead { distance: 0.5 };
    ExpansionConfig {
        schedule: vec![
            PlannerSpec::ZoomOut { travel: None },
            PlannerSpec::Orbit { angle_deg: 180.0, pivot },
            PlannerSpec::Orbit { angle_deg: -180.0, pivot },
        ],
        refine_enabled: false,
        seed: 42,
        ..Default::default()
    }
}

struct PipelineRun {
    scene: GaussianScene,
    report: ExpansionReport,
    ply: Vec<u8>,
    wall_s: f64,
}

fn run_a1(world: &Arc<SyntheticWorld>, threads: usize) -> scene_forge::Result<PipelineRun> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    let cfg = a1_config();
    let started = Instant::now();
    let (scene, report) = pool.install(|| {
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
        run_pipeline(&input, &world.intrinsics, &world.start_pose, &cfg, &stages)
    })?;
    let wall_s = started.elapsed().as_secs_f64();
    let ply = write_scene_bytes(&scene)?;
    Ok(PipelineRun {
        scene,
        report,
        ply,
        wall_s,
    })
}

/// 16 views on the orbit circle, offset half a training step from the
/// frames the pipeline was supervised with.
fn held_out_scores(world: &SyntheticWorld, scene: &GaussianScene) -> scene_forge::Result<(f64, f64)> {
    let start = &world.start_pose;
    let pivot = start.center() + start.forward() * 0.5;
    let settings = RenderSettings::default();
    let (mut p, mut s) = (0.0, 0.0);
    for k in 0..16 {
        let pose = orbit_pose(start, &pivot, 22.5 * k as f64 + 1.875);
        let pred = render_with(scene, &world.intrinsics, &pose, &settings)?.color;
        let gt = world.render(&pose)?.color;
        p += psnr(&pred, &gt)?;
        s += ssim(&pred, &gt)?;
    }
    Ok((p / 16.0, s / 16.0))
}

fn a1_a8_pipeline() -> Vec<Outcome> {
    let world = Arc::new(SyntheticWorld::default_world());
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let first_threads = cores.max(2);
    let first = match run_a1(&world, first_threads) {
        Ok(r) => r,
        Err(e) => {
            return vec![
                outcome("A1", false, format!("pipeline error: {e}")),
                outcome("A8", false, "no first run to compare".into()),
            ]
        }
    };
    let mut out = Vec::new();
    match held_out_scores(&world, &first.scene) {
        Ok((p, s)) => {
            // The time budget is stated for eight cores; scale it to the
            // cores this machine actually has.
            let budget = A1_CORE_SECONDS / cores.min(8) as f64;
            let pass = p >= A1_PSNR && s >= A1_SSIM && first.wall_s <= budget;
            out.push(outcome(
                "A1",
                pass,
                format!(
                    "mean PSNR {p:.2} dB (>= {A1_PSNR}), SSIM {s:.4} (>= {A1_SSIM}), {} gaussians, \
                     {:.0}s on {cores} core(s) (budget {budget:.0}s)",
                    first.scene.len(),
                    first.wall_s
                ),
            ));
        }
        Err(e) => out.push(outcome("A1", false, format!("scoring failed: {e}"))),
    }
    let second = match run_a1(&world, 1) {
        Ok(r) => r,
        Err(e) => {
            out.push(outcome("A8", false, format!("second run failed: {e}")));
            return out;
        }
    };
    let same_counts = first.report.counts() == second.report.counts();
    let same_file = first.ply == second.ply;
    out.push(outcome(
        "A8",
        same_counts && same_file,
        format!(
            "{first_threads} vs 1 threads: reports {}, scene files {} ({} bytes)",
            if same_counts { "identical" } else { "differ" },
            if same_file { "identical" } else { "differ" },
            first.ply.len()
        ),
    ));
    out
}

// ---------------------------------------------------------------- A2

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn gradient_scene(r: &mut impl Rng, n: usize) -> GaussianScene {
    let mut s = GaussianScene::with_capacity(n);
    for _ in 0..n {
        let z = r.random_range(2.0..4.0);
        s.centers.push([r.random_range(-0.45..0.45) * z, r.random_range(-0.45..0.45) * z, z]);
        s.colors.push([r.random(), r.random(), r.random()]);
        s.opacity_logits.push(logit(r.random_range(0.2..0.9)));
        s.log_scales.push([
            r.random_range(0.04f64..0.25).ln(),
            r.random_range(0.04f64..0.25).ln(),
            r.random_range(0.04f64..0.25).ln(),
        ]);
        s.rotations.push(normalize_quat([
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        ]));
    }
    s
}

/// Raw parameter `j` (optimizer order) of Gaussian `i`.
fn param_mut(s: &mut GaussianScene, i: usize, j: usize) -> &mut f64 {
    match j {
        0..=2 => &mut s.centers[i][j],
        3..=5 => &mut s.colors[i][j - 3],
        6 => &mut s.opacity_logits[i],
        7..=9 => &mut s.log_scales[i][j - 7],
        _ => &mut s.rotations[i][j - 10],
    }
}

fn dot(a: &Image, b: &Image) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

fn a2_gradients() -> Vec<Outcome> {
    const H: f64 = 1e-4;
    const TOL: f64 = 1e-3;
    let mut r = rng(2);
    let k = CameraIntrinsics::from_fov(60.0, 32, 32).unwrap();
    let pose = CameraPose::identity();
    let settings = RenderSettings::default();
    let scene = gradient_scene(&mut r, 50);
    let mut weights = Image::new(32, 32);
    for v in weights.data.iter_mut() {
        *v = r.random_range(-1.0..1.0);
    }
    let loss = |s: &GaussianScene| dot(&render_with(s, &k, &pose, &settings).unwrap().color, &weights);
    let (_, cache) = render_cached(&scene, &k, &pose, &settings).unwrap();
    let grads = render_backward(&scene, &k, &pose, &cache, OutputGrads::color(&weights)).unwrap();

    let (mut ok, mut total, mut worst) = (0usize, 0usize, 0.0f64);
    for (i, g) in grads.params.iter().enumerate() {
        let analytic: Vec<f64> = g
            .center
            .iter()
            .chain(&g.color)
            .chain(std::iter::once(&g.opacity_logit))
            .chain(&g.log_scale)
            .chain(&g.rotation)
            .copied()
            .collect();
        for (j, a) in analytic.into_iter().enumerate() {
            let mut plus = scene.clone();
            *param_mut(&mut plus, i, j) += H;
            let mut minus = scene.clone();
            *param_mut(&mut minus, i, j) -= H;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * H);
            let e = rel_err(a, numeric);
            worst = worst.max(e);
            ok += usize::from(e < TOL);
            total += 1;
        }
    }
    let raster_frac = ok as f64 / total as f64;

    let mut target = Image::new(32, 32);
    let mut pred = Image::new(32, 32);
    for (t, p) in target.data.iter_mut().zip(pred.data.iter_mut()) {
        *t = r.random();
        *p = (*t + r.random_range(-0.3..0.3)).clamp(0.0, 1.0);
    }
    let (_, analytic) = ssim_loss(&pred, &target).unwrap();
    let (mut s_ok, mut s_worst) = (0usize, 0.0f64);
    for idx in 0..pred.data.len() {
        let mut plus = pred.clone();
        plus.data[idx] += H;
        let mut minus = pred.clone();
        minus.data[idx] -= H;
        let numeric = (ssim_loss(&plus, &target).unwrap().0 - ssim_loss(&minus, &target).unwrap().0) / (2.0 * H);
        let e = rel_err(analytic.data[idx], numeric);
        s_worst = s_worst.max(e);
        s_ok += usize::from(e < TOL);
    }
    let ssim_frac = s_ok as f64 / pred.data.len() as f64;
    vec![outcome(
        "A2",
        raster_frac >= 0.99 && ssim_frac >= 0.99,
        format!(
            "rasterizer {:.2}% of {total} coordinates within {TOL} (worst {worst:.1e}); \
             SSIM loss {:.2}% of {} (worst {s_worst:.1e})",
            100.0 * raster_frac,
            100.0 * ssim_frac,
            pred.data.len()
        ),
    )]
}

// ---------------------------------------------------------------- A3

fn a3_geometry() -> Vec<Outcome> {
    const N: usize = 100_000;
    let mut r = rng(3);
    let (mut failures, mut worst) = (0usize, 0.0f64);
    for _ in 0..N {
        let width = r.random_range(16..2000usize);
        let height = r.random_range(16..2000usize);
        let k = CameraIntrinsics::new(
            r.random_range(50.0..2000.0),
            r.random_range(50.0..2000.0),
            r.random_range(0.0..width as f64),
            r.random_range(0.0..height as f64),
            width,
            height,
        )
        .unwrap();
        let e = CameraPose::new(random_rotation(&mut r), random_vec(&mut r, 10.0)).unwrap();
        let u = r.random_range(-0.5..width as f64 - 0.5);
        let v = r.random_range(-0.5..height as f64 - 0.5);
        let z = r.random_range(0.1..100.0);
        let p = project(&unproject_pixel(u, v, z, &k, &e.inverse()), &k, &e);
        let err = (p.pixel.x - u).abs().max((p.pixel.y - v).abs()).max((p.depth - z).abs());
        worst = worst.max(err);
        failures += usize::from(!(err <= 1e-6) || p.behind_camera);
    }
    vec![outcome(
        "A3",
        failures == 0,
        format!("{failures} of {N} samples off by more than 1e-6 (worst {worst:.1e})"),
    )]
}

// ---------------------------------------------------------------- A4

fn a4_scale_recovery() -> Vec<Outcome> {
    let world = Arc::new(SyntheticWorld::default_world());
    let k = world.intrinsics;
    let start = world.start_pose;
    let cfg = ExpansionConfig::default();
    let truth = |pose: &CameraPose| world.render(pose).unwrap().depth;

    let input = world.render(&start).unwrap().color;
    // The scene lives in world units; only the stereo used for new
    // keyframes is off by `s`, which alignment has to undo.
    let (scene, reference) =
        scene_forge::expand::init_scene(&input, &oracle_stereo(world.clone()), &k, &start).unwrap();
    let mut worst_scale = 0.0f64;
    let mut errors = Vec::new();
    let mut failure = None;
    for s in [0.25, 0.5, 2.0, 4.0] {
        let stereo = oracle_stereo(world.clone()).with_scale(s).unwrap();
        let est = stereo.estimate(&[input.clone(), input.clone()], &[start, start], &k).unwrap();
        let recovered = median_scale(&est.depths[0], &truth(&start)).unwrap();
        worst_scale = worst_scale.max((recovered - 1.0 / s).abs());
        if let Err(e) = align_unknown_regions(&world, &scene, &reference, &stereo, &cfg, &mut errors) {
            failure = Some(format!("alignment at scale {s} failed: {e}"));
            break;
        }
    }
    let scale_pass = worst_scale <= 1e-6;
    let scale_note = format!("median_scale recovers 1/s within {worst_scale:.1e} for s in {{0.25, 0.5, 2, 4}}");
    let (align_pass, align_note) = match (failure, scene_forge::geometry::median(&mut errors)) {
        (Some(f), _) => (false, f),
        (None, None) => (false, "no unknown pixels to compare".into()),
        (None, Some(m)) => (
            m <= 0.01,
            format!(
                "depth_align median abs rel error {:.3}% (<= 1%) over {} unknown pixels",
                100.0 * m,
                errors.len()
            ),
        ),
    };
    vec![outcome("A4", scale_pass && align_pass, format!("{scale_note}; {align_note}"))]
}

fn align_unknown_regions(
    world: &SyntheticWorld,
    scene: &GaussianScene,
    reference: &Reference,
    stereo: &dyn DenseStereo,
    cfg: &ExpansionConfig,
    errors: &mut Vec<f64>,
) -> scene_forge::Result<()> {
    let k = &reference.intrinsics;
    let traj = plan_stage(&PlannerSpec::ZoomOut { travel: None }, scene, reference, cfg)?;
    let keyframes = select_keyframes(traj.len(), cfg.keyframes)?;
    let mut frames = vec![reference.image.clone()];
    let mut hints = vec![reference.pose];
    for &i in &keyframes {
        frames.push(world.render(&traj.poses[i])?.color);
        hints.push(traj.poses[i]);
    }
    let est = stereo.estimate(&frames, &hints, k)?;
    let ref_render = render_with(scene, k, &reference.pose, &cfg.render)?;
    let known = BinaryMask::from_values(
        k.width,
        k.height,
        ref_render.alpha.values.iter().map(|a| *a >= cfg.reference_alpha).collect(),
    )?;
    let scale = median_scale(&est.depths[0], &ref_render.depth.restricted(&known)?)?;
    for (j, &i) in keyframes.iter().enumerate() {
        let pose = &traj.poses[i];
        let out = render_with(scene, k, pose, &cfg.render)?;
        let unknown = dilate(
            &mask_from_alpha(&out.alpha, cfg.alignment.alpha_threshold)?,
            cfg.alignment.dilation_iters,
        );
        let aligned = depth_align(&est.depths[j + 1], &out.depth, &unknown, scale, &cfg.alignment)?;
        let gt: DepthMap = world.render(pose)?.depth;
        for (idx, m) in unknown.values.iter().enumerate() {
            let (a, g) = (aligned.values()[idx], gt.values()[idx]);
            if *m && aligned.validity()[idx] && gt.validity()[idx] {
                errors.push((a - g).abs() / g);
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- A5

fn a5_trajectories() -> Vec<Outcome> {
    const PLANS: usize = 1000;
    let mut r = rng(5);
    let k = CameraIntrinsics::from_fov(60.0, 64, 48).unwrap();
    let (mut speed_worst, mut radius_worst) = (0.0f64, 0.0f64);
    let mut endpoint_failures = 0usize;
    let (mut n_slerp, mut n_orbit, mut n_zoom) = (0, 0, 0);
    for plan in 0..PLANS {
        let start = CameraPose::from_center(random_rotation(&mut r), random_vec(&mut r, 5.0));
        let n = r.random_range(2..100usize);
        match plan % 3 {
            0 => {
                n_slerp += 1;
                // Keep the turn below a half revolution so the shortest arc
                // is unique.
                let end = loop {
                    let cand = random_rotation(&mut r);
                    if rotation_angle_between(&start.rotation, &cand) < 3.0 {
                        break CameraPose::from_center(cand, random_vec(&mut r, 5.0));
                    }
                };
                let poses = interpolate(&start, &end, n, &PositionMode::Linear).unwrap();
                let total = rotation_angle_between(&start.rotation, &end.rotation);
                let step = total / (n - 1) as f64;
                for w in poses.windows(2) {
                    speed_worst = speed_worst.max((rotation_angle_between(&w[0].rotation, &w[1].rotation) - step).abs());
                }
                endpoint_failures += usize::from(poses[0] != start || poses[n - 1] != end);
            }
            1 => {
                n_orbit += 1;
                let pivot = start.center() + random_vec(&mut r, 3.0);
                let angle = r.random_range(-360.0..=360.0);
                let traj = plan_orbit(&start, &pivot, angle, n, k).unwrap();
                let up = -start.rotation.row(1).transpose();
                let axial = |c: Vector3<f64>| {
                    let d = c - pivot;
                    (d - up * up.dot(&d)).norm()
                };
                let r0 = axial(start.center());
                let d0 = (start.center() - pivot).norm();
                for p in &traj.poses {
                    radius_worst = radius_worst
                        .max((axial(p.center()) - r0).abs())
                        .max(((p.center() - pivot).norm() - d0).abs());
                }
                endpoint_failures += usize::from(
                    *traj.first() != start || *traj.last() != orbit_pose(&start, &pivot, angle),
                );
            }
            _ => {
                n_zoom += 1;
                let travel = r.random_range(0.01..5.0);
                let traj = plan_zoom_out(&start, travel, n, k).unwrap();
                let end = CameraPose::from_center(start.rotation, start.center() - start.forward() * travel);
                endpoint_failures += usize::from(*traj.first() != start || *traj.last() != end);
            }
        }
    }
    let pass = speed_worst <= 1e-6 && radius_worst <= 1e-9 && endpoint_failures == 0;
    vec![outcome(
        "A5",
        pass,
        format!(
            "{PLANS} plans ({n_slerp} slerp, {n_orbit} orbit, {n_zoom} zoom-out): speed deviation {speed_worst:.1e} rad, \
             radius deviation {radius_worst:.1e}, {endpoint_failures} inexact endpoints"
        ),
    )]
}

// ---------------------------------------------------------------- A6

fn a6_camera_error() -> Vec<Outcome> {
    let mut r = rng(6);
    let mut notes = Vec::new();
    let mut pass = true;
    let mut worst_identical = 0.0f64;
    let mut worst_offset = 0.0f64;
    let mut scale_mismatch = 0usize;
    for _ in 0..100 {
        let n = r.random_range(2..50usize);
        let gt: Vec<CameraPose> = (0..n)
            .map(|_| CameraPose::from_center(random_rotation(&mut r), random_vec(&mut r, 3.0)))
            .collect();
        let (re, te) = camera_error(&gt, &gt).unwrap();
        worst_identical = worst_identical.max(re.abs()).max(te.abs());

        // Rotate every camera after the first by 10 degrees about a random
        // axis in its own frame, keeping its center.
        let axis = nalgebra::Unit::new_normalize(random_vec(&mut r, 1.0));
        let offset = *nalgebra::Rotation3::from_axis_angle(&axis, 10f64.to_radians()).matrix();
        let mut pred = gt.clone();
        for p in pred.iter_mut().skip(1) {
            *p = CameraPose::from_center(offset * p.rotation, p.center());
        }
        let (re, _) = camera_error(&pred, &gt).unwrap();
        worst_offset = worst_offset.max((re.to_degrees() - 10.0).abs());

        let factor = 2f64.powi(r.random_range(-8..=8));
        let scaled: Vec<CameraPose> = gt
            .iter()
            .map(|p| CameraPose::new(p.rotation, p.translation * factor).unwrap())
            .collect();
        scale_mismatch += usize::from(camera_error(&scaled, &gt).unwrap() != (0.0, 0.0));
        scale_mismatch += usize::from(camera_error(&scaled, &pred).unwrap() != camera_error(&gt, &pred).unwrap());
    }
    if worst_identical != 0.0 {
        pass = false;
        notes.push(format!("identical trajectories give {worst_identical:.1e}"));
    }
    if worst_offset > 1e-9 {
        pass = false;
    }
    if scale_mismatch > 0 {
        pass = false;
    }
    notes.push(format!(
        "identical -> (0, 0) exactly: {}; 10 deg offset off by {worst_offset:.1e} deg; \
         {scale_mismatch} scale-invariance mismatches over 100 trajectories",
        worst_identical == 0.0
    ));
    vec![outcome("A6", pass, notes.join("; "))]
}

// ---------------------------------------------------------------- A7

fn a7_self_reconstruction() -> Vec<Outcome> {
    let mut r = rng(7);
    let k = CameraIntrinsics::from_fov(60.0, 64, 64).unwrap();
    let truth = gradient_scene(&mut r, 64);
    let poses: Vec<CameraPose> = (0..8)
        .map(|i| {
            let a = (i as f64 * 45.0).to_radians();
            let eye = Vector3::new(0.6 * a.sin(), 0.3 * (i % 2) as f64 - 0.15, 3.0 - 3.0 * a.cos().mul_add(0.2, 0.8));
            CameraPose::look_at(eye, Vector3::new(0.0, 0.0, 3.0), Vector3::new(0.0, -1.0, 0.0)).unwrap()
        })
        .collect();
    let views: Vec<TrainView> = poses
        .iter()
        .map(|p| TrainView {
            pose: *p,
            target: render_with(&truth, &k, p, &RenderSettings::default()).unwrap().color,
        })
        .collect();

    // Perturbations sized to what the default learning rates can undo in
    // the iteration budget: Adam moves each coordinate by about one
    // learning rate per step.
    let mut scene = truth.clone();
    for i in 0..scene.len() {
        for c in 0..3 {
            scene.centers[i][c] += r.random_range(-0.005..0.005);
            scene.colors[i][c] = (scene.colors[i][c] + r.random_range(-0.3..0.3)).clamp(0.0, 1.0);
            scene.log_scales[i][c] += r.random_range(-0.2..0.2);
        }
        scene.opacity_logits[i] += r.random_range(-1.0..1.0);
        let q = scene.rotations[i];
        scene.rotations[i] = normalize_quat([
            q[0] + r.random_range(-0.05..0.05),
            q[1] + r.random_range(-0.05..0.05),
            q[2] + r.random_range(-0.05..0.05),
            q[3] + r.random_range(-0.05..0.05),
        ]);
    }
    let score = |s: &GaussianScene| -> f64 {
        views
            .iter()
            .map(|v| psnr(&render_with(s, &k, &v.pose, &RenderSettings::default()).unwrap().color, &v.target).unwrap())
            .sum::<f64>()
            / views.len() as f64
    };
    let before = score(&scene);
    // Densification is off so the fit stays a 64-Gaussian problem.
    let mut opts = FitOptions {
        iterations: 2000,
        seed: 7,
        ..Default::default()
    };
    opts.optim.densify = false;
    let report = fit(&mut scene, &k, &views, &opts, None);
    match report {
        Ok(rep) => {
            let after = score(&scene);
            vec![outcome(
                "A7",
                after >= 35.0,
                format!(
                    "PSNR {before:.2} -> {after:.2} dB after {} iterations (>= 35), {} gaussians",
                    rep.iterations,
                    scene.len()
                ),
            )]
        }
        Err(e) => vec![outcome("A7", false, format!("fit failed: {e}"))],
    }
}

// ---------------------------------------------------------------- A9

/// Doubles across the whole finite range, including subnormals and signed
/// zeros.
fn wild(r: &mut impl Rng) -> f64 {
    match r.random_range(0..8) {
        0 => 0.0,
        1 => -0.0,
        2 => f64::from_bits(r.random_range(1..0x0010_0000_0000_0000u64)) * if r.random() { 1.0 } else { -1.0 },
        3 => r.random_range(-1.0..1.0),
        _ => loop {
            let v = f64::from_bits(r.random());
            if v.is_finite() {
                break v;
            }
        },
    }
}

fn random_valid_scene(r: &mut impl Rng) -> GaussianScene {
    let n = r.random_range(0..40usize);
    let mut s = GaussianScene::with_capacity(n);
    for _ in 0..n {
        s.centers.push([wild(r), wild(r), wild(r)]);
        s.colors.push([wild(r), wild(r), wild(r)]);
        s.opacity_logits.push(r.random_range(-30.0..30.0));
        s.log_scales.push([wild(r), wild(r), wild(r)]);
        s.rotations.push(normalize_quat([
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0) + 1e-3,
        ]));
    }
    s
}

fn write_scene_bytes(scene: &GaussianScene) -> scene_forge::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_scene(scene, &mut buf)?;
    Ok(buf)
}

fn read_scene_bytes(bytes: &[u8]) -> scene_forge::Result<GaussianScene> {
    read_scene(bytes)
}

fn bits(s: &GaussianScene) -> Vec<u64> {
    let mut out = Vec::new();
    for i in 0..s.len() {
        out.extend(s.centers[i].iter().map(|v| v.to_bits()));
        out.extend(s.colors[i].iter().map(|v| v.to_bits()));
        out.push(s.opacity_logits[i].to_bits());
        out.extend(s.log_scales[i].iter().map(|v| v.to_bits()));
        out.extend(s.rotations[i].iter().map(|v| v.to_bits()));
    }
    out
}

fn a9_persistence() -> Vec<Outcome> {
    const SCENES: usize = 10_000;
    let mut r = rng(9);
    let dir = tempfile::tempdir().unwrap();
    let mut mismatches = 0usize;
    let mut errors = Vec::new();
    for i in 0..SCENES {
        let scene = random_valid_scene(&mut r);
        let back = if i % 100 == 0 {
            // Every hundredth scene goes through the filesystem.
            let path = dir.path().join("scene.ply");
            scene_forge::cli::save_scene(&scene, &path).and_then(|_| scene_forge::cli::load_scene(&path))
        } else {
            write_scene_bytes(&scene).and_then(|b| read_scene_bytes(&b))
        };
        match back {
            Ok(b) => mismatches += usize::from(bits(&b) != bits(&scene) || b.len() != scene.len()),
            Err(e) => {
                if errors.len() < 3 {
                    errors.push(e.to_string());
                }
                mismatches += 1;
            }
        }
    }
    vec![outcome(
        "A9",
        mismatches == 0,
        format!("{mismatches} of {SCENES} scenes changed on a save/load round trip {errors:?}"),
    )]
}
