//! Crate-wide error type. Every message names the subsystem it came from so
//! CLI diagnostics can point at the failing stage.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// A precondition on an operation's arguments was violated.
    #[error("{module}: invalid argument: {message}")]
    InvalidArgument {
        module: &'static str,
        message: String,
    },

    #[error("ingest: no parseable samples in input")]
    EmptyInput,

    #[error("ingest: no samples for node {node_id}")]
    EmptyStream { node_id: u32 },

    /// All 64 temperatures are identical, so the noise scale r * std is undefined.
    #[error("faults: degenerate window: temperature spread is zero, noise scale undefined")]
    DegenerateWindow,

    #[error("faults: cannot build corpus: {0}")]
    Corpus(String),

    #[error("nn: shape mismatch: {0}")]
    Shape(String),

    #[error("nn: non-finite values after layer {layer}")]
    NonFinite { layer: &'static str },

    #[error("nn: training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("nn: bad model file: {0}")]
    ModelFormat(String),

    #[error("encode: bad image file: {0}")]
    ImageFormat(String),

    #[error("baseline: {0}")]
    Tree(String),

    #[error("eval: {metric} undefined: {reason}")]
    UndefinedMetric {
        metric: &'static str,
        reason: &'static str,
    },

    #[error("eval: {0}")]
    Eval(String),
}

impl Error {
    pub fn invalid(module: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            module,
            message: message.into(),
        }
    }
}
