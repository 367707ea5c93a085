use std::fmt;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate depth: {0}")]
    DegenerateDepth(String),
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error("transport error (attempt {attempts}): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error at `{path}`: {message}")]
    Protocol { path: String, message: String },
    #[error("request timed out after {0:.1}s")]
    Timeout(f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage tags attached to stage errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Render,
    Complete,
    Stereo,
    Scale,
    Align,
    Backproject,
    Optimize,
    Refine,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn protocol(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Protocol {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Wraps `self` with a stage tag unless it already carries one.
    pub fn at(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Short machine-readable kind, used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Parameter(_) => "parameter",
            Error::EmptyInput(_) => "empty_input",
            Error::DegenerateDepth(_) => "degenerate_depth",
            Error::Config { .. } => "config",
            Error::Invariant(_) => "invariant",
            Error::Stage { .. } => "stage",
            Error::Transport { .. } => "transport",
            Error::Protocol { .. } => "protocol",
            Error::Timeout(_) => "timeout",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Transport { .. })
    }
}

pub(crate) fn ensure_same_dims(what: &str, a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}
