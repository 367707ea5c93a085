//! Plans the built-in camera paths from the synthetic start view and scores
//! one against a perturbed copy with the camera-error metric.
//!
//! Usage: `cargo run --release --example plan_trajectories`

use nalgebra::{Rotation3, Vector3};
use scene_forge::eval::camera_error;
use scene_forge::geometry::CameraPose;
use scene_forge::interfaces::SyntheticWorld;
use scene_forge::splat::render;
use scene_forge::trajectory::{plan, PivotSpec, PlanContext, PlannerSpec};

fn main() -> scene_forge::Result<()> {
    let world = SyntheticWorld::default_world();
    let depth = render(&world.scene, &world.intrinsics, &world.start_pose)?.depth;
    let ctx = PlanContext {
        start: &world.start_pose,
        intrinsics: world.intrinsics,
        reference_depth: &depth,
        centroid: world.scene.centroid().unwrap_or_default(),
        safety: 0.8,
        frames: 49,
    };
    let specs = [
        PlannerSpec::ZoomOut { travel: None },
        PlannerSpec::Orbit {
            angle_deg: 90.0,
            pivot: PivotSpec::Ahead { distance: 0.5 },
        },
        PlannerSpec::Orbit {
            angle_deg: -45.0,
            pivot: PivotSpec::Centroid,
        },
    ];
    let mut last = None;
    for spec in &specs {
        let traj = plan(spec, &ctx)?;
        let (a, b) = (traj.first().center(), traj.last().center());
        println!(
            "{:<12} {} poses, start ({:+.2} {:+.2} {:+.2}) -> end ({:+.2} {:+.2} {:+.2})",
            spec.id(),
            traj.len(),
            a.x,
            a.y,
            a.z,
            b.x,
            b.y,
            b.z
        );
        last = Some(traj);
    }

    let gt = last.expect("at least one plan").poses;
    let tilt = Rotation3::from_axis_angle(&Vector3::x_axis(), 2f64.to_radians());
    let pred: Vec<CameraPose> = gt
        .iter()
        .enumerate()
        .map(|(i, p)| if i == 0 { *p } else { CameraPose::from_center(tilt * p.rotation, p.center() * 3.0) })
        .collect();
    let (r, t) = camera_error(&pred, &gt)?;
    println!(
        "a 2 degree tilt on a 3x scaled copy: r_err {:.3} deg, t_err {t:.3}",
        r.to_degrees()
    );
    Ok(())
}
