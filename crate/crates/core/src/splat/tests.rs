use approx::assert_abs_diff_eq;
use nalgebra::Vector3;

use super::*;

fn camera() -> (CameraIntrinsics, CameraPose) {
    (
        CameraIntrinsics::new(40.0, 40.0, 16.0, 16.0, 32, 32).unwrap(),
        CameraPose::identity(),
    )
}

fn gaussian(center: [f64; 3], color: [f64; 3], opacity: f64, scale: f64) -> Gaussian {
    Gaussian {
        center,
        color,
        opacity,
        scale: [scale; 3],
        rotation: [1.0, 0.0, 0.0, 0.0],
    }
}

#[test]
fn single_gaussian_alpha_at_principal_point_equals_opacity() {
    let (k, e) = camera();
    let pc = crate::geometry::PointCloud::new(vec![Vector3::new(0.0, 0.0, 2.0)], vec![[1.0; 3]])
        .unwrap();
    let scene = GaussianScene::from_point_cloud(&pc);
    let out = render(&scene, &k, &e).unwrap();
    assert_abs_diff_eq!(out.alpha.get(16, 16), 0.8, epsilon = 1e-12);
    assert_abs_diff_eq!(out.depth.get(16, 16).unwrap(), 2.0, epsilon = 1e-12);
    assert_eq!(out.stats.visible, 1);
}

#[test]
fn empty_scene_renders_background() {
    let (k, e) = camera();
    let settings = RenderSettings {
        background: [0.2, 0.3, 0.4],
        ..Default::default()
    };
    let out = render_with(&GaussianScene::new(), &k, &e, &settings).unwrap();
    assert!(out.alpha.values.iter().all(|a| *a == 0.0));
    assert_eq!(out.depth.valid_count(), 0);
    for v in 0..32 {
        for u in 0..32 {
            assert_eq!(out.color.pixel(u, v), [0.2, 0.3, 0.4]);
        }
    }
}

#[test]
fn nearer_gaussian_occludes_farther() {
    let (k, e) = camera();
    let mut scene = GaussianScene::new();
    let (c1, c2) = ([0.9, 0.1, 0.2], [0.1, 0.7, 0.5]);
    let (a1, a2) = (0.6, 0.7);
    // Farther one first, so index order disagrees with depth order.
    scene.push(gaussian([0.0, 0.0, 3.0], c2, a2, 0.05));
    scene.push(gaussian([0.0, 0.0, 2.0], c1, a1, 0.05));
    let out = render(&scene, &k, &e).unwrap();
    let px = out.color.pixel(16, 16);
    for c in 0..3 {
        assert_abs_diff_eq!(px[c], c1[c] * a1 + c2[c] * a2 * (1.0 - a1), epsilon = 1e-12);
    }
    let a = a1 + a2 * (1.0 - a1);
    assert_abs_diff_eq!(out.alpha.get(16, 16), a, epsilon = 1e-12);
    let z = (2.0 * a1 + 3.0 * a2 * (1.0 - a1)) / a;
    assert_abs_diff_eq!(out.depth.get(16, 16).unwrap(), z, epsilon = 1e-12);
}

#[test]
fn gaussians_behind_camera_are_culled() {
    let (k, e) = camera();
    let mut scene = GaussianScene::new();
    scene.push(gaussian([0.0, 0.0, -1.0], [1.0; 3], 0.9, 0.1));
    scene.push(gaussian([0.0, 0.0, 0.005], [1.0; 3], 0.9, 0.1));
    scene.push(gaussian([50.0, 0.0, 1.0], [1.0; 3], 0.9, 0.01));
    let out = render(&scene, &k, &e).unwrap();
    assert_eq!(out.stats.behind_camera, 2);
    assert_eq!(out.stats.off_screen, 1);
    assert!(out.alpha.values.iter().all(|a| *a == 0.0));
}

fn random_scene(n: usize, seed: u64) -> GaussianScene {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut scene = GaussianScene::new();
    for _ in 0..n {
        let q = normalize_quat(std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
        scene.push(Gaussian {
            center: [
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(1.5..3.0),
            ],
            color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
            opacity: rng.random_range(0.2..0.9),
            scale: std::array::from_fn(|_| rng.random_range(0.03..0.15)),
            rotation: q,
        });
    }
    scene
}

#[test]
fn alpha_stays_in_unit_range_and_falls_with_opacity() {
    let (k, e) = camera();
    let mut scene = random_scene(40, 3);
    let mut prev = render(&scene, &k, &e).unwrap().alpha;
    assert!(prev.values.iter().all(|a| (0.0..=1.0).contains(a)));
    for _ in 0..5 {
        for l in scene.opacity_logits.iter_mut() {
            *l -= 1.5;
        }
        let next = render(&scene, &k, &e).unwrap().alpha;
        for (a, b) in next.values.iter().zip(&prev.values) {
            assert!(a <= b);
        }
        prev = next;
    }
    assert!(prev.values.iter().cloned().fold(0.0, f64::max) < 0.02);
}

#[test]
fn zero_upstream_gradient_gives_zero_parameter_gradients() {
    let (k, e) = camera();
    let scene = random_scene(20, 5);
    let (_, cache) = render_cached(&scene, &k, &e, &RenderSettings::default()).unwrap();
    let zero = Image::new(32, 32);
    let g = render_backward(&scene, &k, &e, &cache, OutputGrads::color(&zero)).unwrap();
    assert!(g.params.iter().all(|p| *p == ParamGrad::default()));
}

#[test]
fn color_gradient_of_single_gaussian_is_alpha_mass() {
    let (k, e) = camera();
    let mut scene = GaussianScene::new();
    scene.push(gaussian([0.1, -0.05, 2.0], [0.3, 0.4, 0.5], 0.7, 0.08));
    let (out, cache) = render_cached(&scene, &k, &e, &RenderSettings::default()).unwrap();
    let ones = Image::filled(32, 32, [1.0; 3]);
    let g = render_backward(&scene, &k, &e, &cache, OutputGrads::color(&ones)).unwrap();
    let mass: f64 = out.alpha.values.iter().sum();
    for c in 0..3 {
        assert_abs_diff_eq!(g.params[0].color[c], mass, epsilon = 1e-10);
    }
}

#[test]
fn stale_cache_is_rejected() {
    let (k, e) = camera();
    let mut scene = random_scene(5, 1);
    let (_, cache) = render_cached(&scene, &k, &e, &RenderSettings::default()).unwrap();
    scene.colors[0][0] += 0.01;
    let g = Image::new(32, 32);
    let err = render_backward(&scene, &k, &e, &cache, OutputGrads::color(&g)).unwrap_err();
    assert!(matches!(err, Error::Invariant(_)));
    let moved = CameraPose::from_center(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.1));
    let scene = random_scene(5, 1);
    let (_, cache) = render_cached(&scene, &k, &e, &RenderSettings::default()).unwrap();
    assert!(render_backward(&scene, &k, &moved, &cache, OutputGrads::color(&g)).is_err());
}

#[test]
fn output_is_identical_across_thread_counts() {
    let k = CameraIntrinsics::new(60.0, 60.0, 40.0, 24.0, 80, 48).unwrap();
    let e = CameraPose::identity();
    let scene = random_scene(200, 9);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (out, cache) = render_cached(&scene, &k, &e, &RenderSettings::default()).unwrap();
            let g = Image::filled(80, 48, [0.3, -0.2, 0.1]);
            let grads = render_backward(&scene, &k, &e, &cache, OutputGrads::color(&g)).unwrap();
            (out, grads)
        })
    };
    let (o1, g1) = run(1);
    let (o4, g4) = run(4);
    assert_eq!(o1, o4);
    assert_eq!(g1, g4);
}

use nalgebra::Matrix3;
