//! Camera paths that drive scene expansion: interpolation between poses,
//! zoom-out and orbit planners, and the collision bound on travel.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, CameraPose, DepthMap};

/// Frames per generated video.
pub const VIDEO_FRAMES: usize = 49;

/// Ordered camera poses sharing one set of intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub poses: Vec<CameraPose>,
    pub intrinsics: CameraIntrinsics,
}

impl Trajectory {
    pub fn new(poses: Vec<CameraPose>, intrinsics: CameraIntrinsics) -> Result<Self> {
        for (i, p) in poses.iter().enumerate() {
            p.validate()
                .map_err(|e| Error::param(format!("trajectory pose {i}: {e}")))?;
        }
        intrinsics.validate()?;
        Ok(Self { poses, intrinsics })
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn first(&self) -> &CameraPose {
        &self.poses[0]
    }

    pub fn last(&self) -> &CameraPose {
        &self.poses[self.poses.len() - 1]
    }
}

/// Spatial interpolation of camera centers.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum PositionMode {
    #[default]
    Linear,
    /// Natural cubic spline through start, the waypoints, and end, with
    /// uniformly spaced knots.
    CubicSpline { waypoints: Vec<Vector3<f64>> },
}

/// Constant-speed geodesic interpolation from `a` (t = 0) to `b` (t = 1).
///
/// When the two rotations are half a turn apart the rotation axis is
/// ambiguous in sign; the axis is then oriented so that its largest-magnitude
/// component is positive.
pub fn slerp_rotation(a: &Matrix3<f64>, b: &Matrix3<f64>, t: f64) -> Matrix3<f64> {
    let rel = b * a.transpose();
    let (axis, angle) = rotation_axis_angle(&rel);
    if angle == 0.0 {
        return *a;
    }
    let step = Rotation3::from_axis_angle(&axis, t * angle);
    step.matrix() * a
}

/// Axis and angle in `[0, π]` with the half-turn tie-break applied.
fn rotation_axis_angle(r: &Matrix3<f64>) -> (Unit<Vector3<f64>>, f64) {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let mut w = q.w;
    let mut v = q.imag();
    if w < 0.0 {
        w = -w;
        v = -v;
    }
    let s = v.norm();
    if s < 1e-15 {
        return (Vector3::z_axis(), 0.0);
    }
    let angle = 2.0 * s.atan2(w);
    if w.abs() < 1e-12 {
        let k = v.iamax();
        if v[k] < 0.0 {
            v = -v;
        }
    }
    (Unit::new_normalize(v), angle)
}

/// `n` poses from `start` to `end`; endpoints are copied exactly.
pub fn interpolate(
    start: &CameraPose,
    end: &CameraPose,
    n: usize,
    mode: &PositionMode,
) -> Result<Vec<CameraPose>> {
    if n < 2 {
        return Err(Error::param(format!("interpolate needs n >= 2, got {n}")));
    }
    let c0 = start.center();
    let c1 = end.center();
    let spline = match mode {
        PositionMode::Linear => None,
        PositionMode::CubicSpline { waypoints } => {
            let mut knots = Vec::with_capacity(waypoints.len() + 2);
            knots.push(c0);
            knots.extend(waypoints.iter().copied());
            knots.push(c1);
            Some(NaturalSpline::fit(&knots))
        }
    };
    let mut poses = Vec::with_capacity(n);
    poses.push(*start);
    for k in 1..n - 1 {
        let t = k as f64 / (n - 1) as f64;
        let center = match &spline {
            None => c0 + (c1 - c0) * t,
            Some(s) => s.eval(t),
        };
        let rotation = slerp_rotation(&start.rotation, &end.rotation, t);
        poses.push(CameraPose::from_center(rotation, center));
    }
    poses.push(*end);
    Ok(poses)
}

/// Natural cubic spline in 3D over uniform knots on `[0, 1]`.
struct NaturalSpline {
    points: Vec<Vector3<f64>>,
    second: Vec<Vector3<f64>>,
}

impl NaturalSpline {
    fn fit(points: &[Vector3<f64>]) -> Self {
        let n = points.len();
        let mut second = vec![Vector3::zeros(); n];
        if n > 2 {
            // Tridiagonal system with unit knot spacing: m[i-1] + 4 m[i] + m[i+1] = 6 Δ²p.
            let inner = n - 2;
            let mut diag = vec![4.0; inner];
            let mut rhs: Vec<Vector3<f64>> = (1..n - 1)
                .map(|i| (points[i + 1] - 2.0 * points[i] + points[i - 1]) * 6.0)
                .collect();
            for i in 1..inner {
                let w = 1.0 / diag[i - 1];
                diag[i] -= w;
                let prev = rhs[i - 1];
                rhs[i] -= prev * w;
            }
            let mut m = vec![Vector3::zeros(); inner];
            m[inner - 1] = rhs[inner - 1] / diag[inner - 1];
            for i in (0..inner - 1).rev() {
                m[i] = (rhs[i] - m[i + 1]) / diag[i];
            }
            second[1..n - 1].copy_from_slice(&m);
        }
        Self {
            points: points.to_vec(),
            second,
        }
    }

    fn eval(&self, t: f64) -> Vector3<f64> {
        let segments = self.points.len() - 1;
        let x = t.clamp(0.0, 1.0) * segments as f64;
        let i = (x.floor() as usize).min(segments - 1);
        let s = x - i as f64;
        let (p0, p1) = (self.points[i], self.points[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        p0 * (1.0 - s)
            + p1 * s
            + (m0 * ((1.0 - s).powi(3) - (1.0 - s)) + m1 * (s.powi(3) - s)) / 6.0
    }
}

/// Backward travel along the start camera's viewing axis with fixed orientation.
pub fn plan_zoom_out(
    start: &CameraPose,
    travel: f64,
    n: usize,
    intrinsics: CameraIntrinsics,
) -> Result<Trajectory> {
    if !(travel > 0.0) || !travel.is_finite() {
        return Err(Error::param(format!("zoom-out travel must be positive, got {travel}")));
    }
    let end = CameraPose::from_center(start.rotation, start.center() - start.forward() * travel);
    Trajectory::new(interpolate(start, &end, n, &PositionMode::Linear)?, intrinsics)
}

/// Revolves the camera about the vertical axis through `pivot`.
///
/// "Vertical" is the start camera's up direction. The whole camera rotates
/// rigidly, so the pivot's bearing in the camera frame stays fixed and a
/// camera aimed at the pivot keeps aiming at it. Positive angles turn left.
pub fn plan_orbit(
    start: &CameraPose,
    pivot: &Vector3<f64>,
    total_angle_deg: f64,
    n: usize,
    intrinsics: CameraIntrinsics,
) -> Result<Trajectory> {
    if n < 2 {
        return Err(Error::param(format!("orbit needs n >= 2, got {n}")));
    }
    if !pivot.iter().all(|v| v.is_finite()) {
        return Err(Error::param("orbit pivot must be finite"));
    }
    if !(total_angle_deg.abs() <= 360.0) {
        return Err(Error::param(format!("orbit angle {total_angle_deg} exceeds 360 degrees")));
    }
    if (start.center() - pivot).norm() < 1e-12 {
        return Err(Error::param("camera center coincides with orbit pivot"));
    }
    let mut poses = Vec::with_capacity(n);
    poses.push(*start);
    for k in 1..n - 1 {
        poses.push(orbit_pose(start, pivot, total_angle_deg * k as f64 / (n - 1) as f64));
    }
    // `angle * (n-1) / (n-1)` can round away from `angle`.
    poses.push(orbit_pose(start, pivot, total_angle_deg));
    Trajectory::new(poses, intrinsics)
}

/// `start` revolved by `angle_deg` about the vertical axis through `pivot`.
pub fn orbit_pose(start: &CameraPose, pivot: &Vector3<f64>, angle_deg: f64) -> CameraPose {
    let up = Unit::new_normalize(-start.rotation.row(1).transpose());
    let turn = Rotation3::from_axis_angle(&up, angle_deg.to_radians());
    let center = pivot + turn * (start.center() - pivot);
    CameraPose::from_center(start.rotation * turn.matrix().transpose(), center)
}

/// `safety × (minimum valid depth)`.
pub fn collision_bound(depth: &DepthMap, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety <= 1.0) {
        return Err(Error::param(format!("safety fraction {safety} outside (0, 1]")));
    }
    let min = depth
        .min_valid()
        .ok_or_else(|| Error::EmptyInput("depth map has no valid pixels".into()))?;
    Ok(safety * min)
}

/// Where an orbit revolves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PivotSpec {
    /// Centroid of the initial point cloud.
    #[default]
    Centroid,
    /// A point this far ahead of the start camera along its viewing axis.
    Ahead { distance: f64 },
    Fixed { point: [f64; 3] },
}

/// One entry in the expansion schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlannerSpec {
    /// Backward travel. Without an explicit `travel`, the distance is the
    /// collision bound of the reference depth.
    ZoomOut {
        #[serde(default)]
        travel: Option<f64>,
    },
    Orbit {
        angle_deg: f64,
        #[serde(default)]
        pivot: PivotSpec,
    },
}

impl PlannerSpec {
    pub fn id(&self) -> String {
        match self {
            PlannerSpec::ZoomOut { .. } => "zoom_out".into(),
            PlannerSpec::Orbit { angle_deg, .. } => format!("orbit{angle_deg:+}"),
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        match self {
            PlannerSpec::ZoomOut { travel: Some(t) } if !(*t > 0.0) => {
                Err(Error::config(format!("{path}.travel"), "must be > 0"))
            }
            PlannerSpec::Orbit { angle_deg, .. } if !(angle_deg.abs() <= 360.0) => {
                Err(Error::config(format!("{path}.angle_deg"), "must be within [-360, 360]"))
            }
            PlannerSpec::Orbit {
                pivot: PivotSpec::Ahead { distance },
                ..
            } if !(*distance > 0.0) => {
                Err(Error::config(format!("{path}.pivot.distance"), "must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// Zoom out, then a half turn left and a half turn right.
pub fn default_schedule() -> Vec<PlannerSpec> {
    vec![
        PlannerSpec::ZoomOut { travel: None },
        PlannerSpec::Orbit {
            angle_deg: 180.0,
            pivot: PivotSpec::Centroid,
        },
        PlannerSpec::Orbit {
            angle_deg: -180.0,
            pivot: PivotSpec::Centroid,
        },
    ]
}

/// Scene facts the planners need.
#[derive(Debug, Clone, Copy)]
pub struct PlanContext<'a> {
    pub start: &'a CameraPose,
    pub intrinsics: CameraIntrinsics,
    pub reference_depth: &'a DepthMap,
    pub centroid: Vector3<f64>,
    pub safety: f64,
    pub frames: usize,
}

pub fn plan(spec: &PlannerSpec, ctx: &PlanContext<'_>) -> Result<Trajectory> {
    match spec {
        PlannerSpec::ZoomOut { travel } => {
            let travel = match travel {
                Some(t) => *t,
                None => collision_bound(ctx.reference_depth, ctx.safety)?,
            };
            plan_zoom_out(ctx.start, travel, ctx.frames, ctx.intrinsics)
        }
        PlannerSpec::Orbit { angle_deg, pivot } => {
            let pivot = match pivot {
                PivotSpec::Centroid => ctx.centroid,
                PivotSpec::Ahead { distance } => {
                    ctx.start.center() + ctx.start.forward() * *distance
                }
                PivotSpec::Fixed { point } => Vector3::from_column_slice(point),
            };
            plan_orbit(ctx.start, &pivot, *angle_deg, ctx.frames, ctx.intrinsics)
        }
    }
}
