use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: String,
        got: String,
    },

    #[error("prompt tensor for layer {layer} has shape {got:?}, backbone expects {expected:?}")]
    LayerShape {
        layer: usize,
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },

    #[error("layer {0} is not selected in the adapter stack")]
    LayerNotSelected(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("backend unavailable: missing asset {}", .path.display())]
    BackendUnavailable { path: PathBuf },

    #[error("clips without full ground truth: {}", .0.join(", "))]
    MissingGroundTruth(Vec<String>),

    #[error("annotation convention violated: {0}")]
    Convention(String),

    #[error("scan of {} found {} problem(s): {}", .root.display(), .problems.len(), .problems.join("; "))]
    Scan {
        root: PathBuf,
        problems: Vec<String>,
    },

    #[error("{}: mask is not bilevel (found gray value {value})", .path.display())]
    MaskNotBilevel { path: PathBuf, value: u8 },

    #[error("failed to decode {}: {message}", .path.display())]
    Decode { path: PathBuf, message: String },

    #[error("unsupported format version {found} in {} (expected {expected})", .path.display())]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("corrupt file {}: {message}", .path.display())]
    Corrupt { path: PathBuf, message: String },

    #[error("non-finite loss at step {step}; batch dump: {dump}")]
    NonFiniteLoss { step: u64, dump: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(
        context: impl Into<String>,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Dimension {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
