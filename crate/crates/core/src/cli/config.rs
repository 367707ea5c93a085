//! JSON pipeline configuration.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expand::ExpansionConfig;
use crate::geometry::{CameraIntrinsics, CameraPose};
use crate::interfaces::{
    blur_refiner, identity_refiner, oracle_completer, oracle_stereo, remote_completer, DenseStereo,
    ImageRefiner, SyntheticWorld, ViewCompleter, WorldParams,
};
use crate::trajectory::PlannerSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CompleterSpec {
    /// Renders the synthetic world along the requested path.
    Oracle,
    Remote {
        endpoint: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
    },
}

fn default_timeout() -> f64 {
    300.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StereoSpec {
    Oracle {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        noise_sigma: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RefinerSpec {
    Identity,
    Blur { sigma: f64 },
}

/// The input camera. Its resolution comes from the input image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSpec {
    pub hfov_deg: f64,
    /// Camera center in world coordinates; the camera looks down +z.
    pub center: [f64; 3],
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            hfov_deg: WorldParams::default().hfov_deg,
            center: [0.0, 0.0, -0.5],
        }
    }
}

impl CameraSpec {
    pub fn pose(&self) -> CameraPose {
        CameraPose::from_center(Matrix3::identity(), Vector3::from(self.center))
    }

    pub fn intrinsics(&self, width: usize, height: usize) -> Result<CameraIntrinsics> {
        CameraIntrinsics::from_fov(self.hfov_deg, width, height)
    }
}

/// Where a rendered or paired video travels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrajectorySpec {
    Planned(PlannerSpec),
    Explicit(ExplicitPoses),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitPoses {
    pub poses: Vec<crate::cli::files::PoseRecord>,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        TrajectorySpec::Planned(PlannerSpec::ZoomOut { travel: None })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub scene: String,
    pub report: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            scene: "scene.ply".into(),
            report: "report.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default = "default_completer")]
    pub completer: CompleterSpec,
    #[serde(default = "default_stereo")]
    pub stereo: StereoSpec,
    #[serde(default = "default_refiner")]
    pub refiner: RefinerSpec,
    /// Synthetic room backing the oracles.
    #[serde(default)]
    pub world: WorldParams,
    #[serde(default)]
    pub camera: CameraSpec,
    /// Path used by `render` and `make-pairs`.
    #[serde(default)]
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_seed() -> u64 {
    42
}

fn default_completer() -> CompleterSpec {
    CompleterSpec::Oracle
}

fn default_stereo() -> StereoSpec {
    StereoSpec::Oracle {
        scale: 1.0,
        noise_sigma: 0.0,
    }
}

fn default_refiner() -> RefinerSpec {
    RefinerSpec::Identity
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: default_seed(),
            expansion: ExpansionConfig::default(),
            completer: default_completer(),
            stereo: default_stereo(),
            refiner: default_refiner(),
            world: WorldParams::default(),
            camera: CameraSpec::default(),
            trajectory: TrajectorySpec::default(),
            output: OutputPaths::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::config("$", format!("invalid JSON: {e}")))?;
        match raw.get("schema_version") {
            None => return Err(Error::config("$.schema_version", "missing")),
            Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
                return Err(Error::config(
                    "$.schema_version",
                    format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
                ))
            }
            _ => {}
        }
        let top_seed = raw.get("seed").cloned().unwrap_or(default_seed().into());
        if raw.pointer("/world/seed").is_some_and(|s| *s != top_seed) {
            return Err(Error::config(
                "$.world.seed",
                "the world is generated from the top-level seed; omit this or make it equal",
            ));
        }
        let cfg: PipelineConfig = serde_path_to_error::deserialize(raw).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "$".to_string() } else { format!("$.{path}") };
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        let seed = cfg.seed;
        Ok(cfg.with_seed(seed))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.expansion.validate("$.expansion")?;
        match &self.completer {
            CompleterSpec::Remote { endpoint, timeout_s } => {
                if !(endpoint.starts_with("http://") || endpoint.starts_with("https://")) {
                    return Err(Error::config("$.completer.endpoint", "must be an http(s) URL"));
                }
                if !(*timeout_s > 0.0 && timeout_s.is_finite()) {
                    return Err(Error::config("$.completer.timeout_s", "must be > 0"));
                }
            }
            CompleterSpec::Oracle => {}
        }
        match self.stereo {
            StereoSpec::Oracle { scale, noise_sigma } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::config("$.stereo.scale", "must be > 0"));
                }
                if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                    return Err(Error::config("$.stereo.noise_sigma", "must be >= 0"));
                }
            }
        }
        if let RefinerSpec::Blur { sigma } = self.refiner {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::config("$.refiner.sigma", "must be > 0"));
            }
        }
        if !(self.camera.hfov_deg > 0.0 && self.camera.hfov_deg < 180.0) {
            return Err(Error::config("$.camera.hfov_deg", "must be in (0, 180)"));
        }
        match &self.trajectory {
            TrajectorySpec::Planned(p) => p.validate("$.trajectory")?,
            TrajectorySpec::Explicit(e) if e.poses.is_empty() => {
                return Err(Error::config("$.trajectory.poses", "must not be empty"))
            }
            TrajectorySpec::Explicit(_) => {}
        }
        SyntheticWorld::new(self.world).map_err(|e| Error::config("$.world", e.to_string()))?;
        Ok(())
    }

    /// Overrides the top-level seed and every seed derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.world.seed = seed;
        self
    }

    /// Expansion settings with the top-level seed applied.
    pub fn expansion(&self) -> ExpansionConfig {
        ExpansionConfig {
            seed: self.seed,
            ..self.expansion.clone()
        }
    }

    pub fn world(&self) -> Result<Arc<SyntheticWorld>> {
        Ok(Arc::new(SyntheticWorld::new(WorldParams {
            seed: self.seed,
            ..self.world
        })?))
    }

    pub fn completer(&self, world: &Arc<SyntheticWorld>) -> Result<Box<dyn ViewCompleter>> {
        Ok(match &self.completer {
            CompleterSpec::Oracle => Box::new(oracle_completer(world.clone())),
            CompleterSpec::Remote { endpoint, timeout_s } => Box::new(remote_completer(endpoint, *timeout_s)?),
        })
    }

    pub fn stereo(&self, world: &Arc<SyntheticWorld>) -> Result<Box<dyn DenseStereo>> {
        Ok(match self.stereo {
            StereoSpec::Oracle { scale, noise_sigma } => Box::new(
                oracle_stereo(world.clone())
                    .with_scale(scale)?
                    .with_noise(noise_sigma, self.seed)?,
            ),
        })
    }

    pub fn refiner(&self) -> Result<Box<dyn ImageRefiner>> {
        Ok(match self.refiner {
            RefinerSpec::Identity => Box::new(identity_refiner()),
            RefinerSpec::Blur { sigma } => Box::new(blur_refiner(sigma)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_path(err: Error) -> String {
        match err {
            Error::Config { path, .. } => path,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"schema_version": 1}"#).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn full_config_round_trips() {
        let cfg = PipelineConfig {
            completer: CompleterSpec::Remote {
                endpoint: "http://127.0.0.1:9".into(),
                timeout_s: 5.0,
            },
            refiner: RefinerSpec::Blur { sigma: 1.5 },
            ..Default::default()
        };
        assert_eq!(PipelineConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn schema_version_is_required_and_checked() {
        assert_eq!(config_path(PipelineConfig::from_json("{}").unwrap_err()), "$.schema_version");
        let e = PipelineConfig::from_json(r#"{"schema_version": 7}"#).unwrap_err();
        assert_eq!(config_path(e), "$.schema_version");
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let e = PipelineConfig::from_json(r#"{"schema_version": 1, "expansion": {"optim": {"lr_typo": 1}}}"#)
            .unwrap_err();
        assert_eq!(config_path(e), "$.expansion.optim.lr_typo");
        let e = PipelineConfig::from_json(r#"{"schema_version": 1, "colour": 1}"#).unwrap_err();
        assert_eq!(config_path(e), "$.colour");
        // `seed` is valid at the top level but not inside `optim`.
        let e = PipelineConfig::from_json(r#"{"schema_version": 1, "expansion": {"optim": {"seed": 1}}}"#)
            .unwrap_err();
        assert_eq!(config_path(e), "$.expansion.optim.seed");
        let e = PipelineConfig::from_json(r#"{"schema_version": 1, "world": {"seed": 3}}"#).unwrap_err();
        assert_eq!(config_path(e), "$.world.seed");
        let e = PipelineConfig::from_json(r#"{"schema_version": 1, "expansion": {"iterations": "many"}}"#)
            .unwrap_err();
        assert_eq!(config_path(e), "$.expansion.iterations");
    }

    #[test]
    fn out_of_range_values_name_the_field() {
        let cases = [
            (r#"{"schema_version": 1, "expansion": {"keyframes": 0}}"#, "$.expansion.keyframes"),
            (r#"{"schema_version": 1, "expansion": {"safety": 2.0}}"#, "$.expansion.safety"),
            (
                r#"{"schema_version": 1, "expansion": {"schedule": [{"kind": "orbit", "angle_deg": 400}]}}"#,
                "$.expansion.schedule[0].angle_deg",
            ),
            (r#"{"schema_version": 1, "completer": {"kind": "remote", "endpoint": "ftp://x"}}"#, "$.completer.endpoint"),
            (r#"{"schema_version": 1, "refiner": {"kind": "blur", "sigma": -1}}"#, "$.refiner.sigma"),
            (r#"{"schema_version": 1, "camera": {"hfov_deg": 180}}"#, "$.camera.hfov_deg"),
            (r#"{"schema_version": 1, "world": {"spacing": 0}}"#, "$.world"),
        ];
        for (json, path) in cases {
            assert_eq!(config_path(PipelineConfig::from_json(json).unwrap_err()), path, "{json}");
        }
    }

    #[test]
    fn trajectory_accepts_planners_and_explicit_poses() {
        let cfg = PipelineConfig::from_json(
            r#"{"schema_version": 1, "trajectory": {"kind": "orbit", "angle_deg": 90}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.trajectory, TrajectorySpec::Planned(PlannerSpec::Orbit { .. })));
        let cfg = PipelineConfig::from_json(
            r#"{"schema_version": 1, "trajectory": {"poses": [{"rotation": [1,0,0,0,1,0,0,0,1], "translation": [0,0,0]}]}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.trajectory, TrajectorySpec::Explicit(_)));
    }
}
