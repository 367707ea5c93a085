//! Command-line entry points, configuration and persistence.
//!
//! Every command reads a [`PipelineConfig`] JSON file. Failures print one
//! JSON object on stderr and map to exit codes: 2 for configuration
//! problems, 3 for pipeline stage failures, 4 for file I/O and format
//! errors.

mod commands;
pub mod config;
pub mod files;
pub mod ply;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::error::Error;

pub use commands::{cmd_eval, cmd_expand, cmd_init, cmd_make_pairs, cmd_render, reference_from_scene};
pub use config::{PipelineConfig, TrajectorySpec, SCHEMA_VERSION};
pub use ply::{load_scene, save_scene};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "scene-forge", version, about = "Expand one image into a Gaussian-splat scene")]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the initial scene from one image.
    Init {
        /// Input image. Without it the synthetic world is rendered from the
        /// configured camera.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the expansion schedule on a scene.
    Expand {
        #[arg(long)]
        scene: PathBuf,
        /// The original input image; rendered from the scene when omitted.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Render frames, depth and alpha along a trajectory.
    Render {
        /// Scene file; the synthetic world when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Trajectory JSON overriding the configured one.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two frame directories.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, requires = "gt_poses")]
        pred_poses: Option<PathBuf>,
        #[arg(long, requires = "pred_poses")]
        gt_poses: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render incomplete/complete video pairs for completer training.
    MakePairs {
        /// Full scene; the synthetic world when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        start_frame: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        _ => EXIT_STAGE,
    }
}

/// The machine-readable error object written to stderr.
pub fn error_json(err: &Error) -> serde_json::Value {
    let mut obj = json!({
        "kind": err.kind(),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    });
    match err {
        Error::Stage { stage, source } => {
            obj["stage"] = json!(stage);
            obj["cause"] = json!(source.kind());
        }
        Error::Config { path, .. } | Error::Protocol { path, .. } => obj["path"] = json!(path),
        _ => {}
    }
    json!({ "error": obj })
}

/// Progress output, enabled by `--verbose`.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    pub verbose: bool,
}

impl Log {
    pub fn info(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[scene-forge] {}", msg.as_ref());
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let log = Log { verbose: cli.verbose };
    let config_path = cli
        .config
        .ok_or_else(|| Error::Config {
            path: "--config".into(),
            message: "a configuration file is required".into(),
        })?;
    let mut cfg = PipelineConfig::load(&config_path).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", config_path.display()),
        )),
        e => e,
    })?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config {
                path: "--threads".into(),
                message: "must be >= 1".into(),
            });
        }
        // Only the first pool configuration in a process takes effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Init { image, out } => {
            let out = out.unwrap_or_else(|| cfg.output.scene.clone().into());
            cmd_init(&cfg, image.as_deref(), &out, log)
        }
        Command::Expand {
            scene,
            image,
            out,
            report,
        } => {
            let out = out.unwrap_or_else(|| cfg.output.scene.clone().into());
            let report = report.unwrap_or_else(|| cfg.output.report.clone().into());
            cmd_expand(&cfg, &scene, image.as_deref(), &out, &report, log)
        }
        Command::Render {
            scene,
            trajectory,
            out,
        } => cmd_render(&cfg, scene.as_deref(), trajectory.as_deref(), &out, log),
        Command::Eval {
            pred,
            gt,
            pred_poses,
            gt_poses,
            out,
        } => {
            let poses = pred_poses.zip(gt_poses);
            let report = cmd_eval(&pred, &gt, poses.as_ref().map(|(p, g)| (p.as_path(), g.as_path())))?;
            let text = serde_json::to_string_pretty(&report).expect("report serializes");
            if let Some(out) = out {
                std::fs::write(out, &text)?;
            }
            println!("{text}");
            Ok(())
        }
        Command::MakePairs {
            scene,
            trajectory,
            start_frame,
            out,
        } => cmd_make_pairs(&cfg, scene.as_deref(), trajectory.as_deref(), start_frame, &out, log),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
