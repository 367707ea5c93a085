//! Fits a jittered copy of a small Gaussian scene back to renders of the
//! original from eight cameras.
//!
//! Usage: `cargo run --release --example fit_scene [iterations]`

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scene_forge::eval::psnr;
use scene_forge::geometry::{CameraIntrinsics, CameraPose};
use scene_forge::optimize::{fit, FitOptions, TrainView};
use scene_forge::splat::{logit, normalize_quat, render, GaussianScene};

fn main() -> scene_forge::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("iterations must be an integer"))
        .unwrap_or(1000);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let k = CameraIntrinsics::from_fov(60.0, 64, 64)?;

    let mut truth = GaussianScene::new();
    for _ in 0..64 {
        let z = rng.random_range(2.0..4.0);
        truth.centers.push([rng.random_range(-0.4..0.4) * z, rng.random_range(-0.4..0.4) * z, z]);
        truth.colors.push([rng.random(), rng.random(), rng.random()]);
        truth.opacity_logits.push(logit(rng.random_range(0.3..0.9)));
        truth.log_scales.push([rng.random_range(0.05f64..0.2).ln(); 3]);
        truth.rotations.push(normalize_quat([1.0, rng.random(), rng.random(), rng.random()]));
    }
    let views: Vec<TrainView> = (0..8)
        .map(|i| {
            let a = (i as f64 * 45.0).to_radians();
            let eye = Vector3::new(0.5 * a.sin(), 0.0, 0.5 * (1.0 - a.cos()));
            let pose = CameraPose::look_at(eye, Vector3::new(0.0, 0.0, 3.0), Vector3::new(0.0, -1.0, 0.0))?;
            Ok(TrainView {
                pose,
                target: render(&truth, &k, &pose)?.color,
            })
        })
        .collect::<scene_forge::Result<_>>()?;

    let mut scene = truth.clone();
    for i in 0..scene.len() {
        for c in 0..3 {
            scene.colors[i][c] = rng.random();
            scene.log_scales[i][c] += rng.random_range(-0.3..0.3);
        }
        scene.opacity_logits[i] = 0.0;
    }
    let mean_psnr = |s: &GaussianScene| -> scene_forge::Result<f64> {
        let mut total = 0.0;
        for v in &views {
            total += psnr(&render(s, &k, &v.pose)?.color, &v.target)?;
        }
        Ok(total / views.len() as f64)
    };
    println!("before: {:.2} dB", mean_psnr(&scene)?);
    let mut opts = FitOptions {
        iterations,
        window: 100,
        ..Default::default()
    };
    opts.optim.densify = false;
    let report = fit(&mut scene, &k, &views, &opts, None)?;
    for (w, loss) in report.window_losses.iter().enumerate() {
        println!("iterations {:>5}..{:<5} loss {loss:.5}", w * 100, (w + 1) * 100);
    }
    println!("after:  {:.2} dB", mean_psnr(&scene)?);
    Ok(())
}
