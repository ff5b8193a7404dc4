use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Element counts or matrix dimensions do not conform.
    #[error("size error: {0}")]
    Size(String),

    /// Invalid extents (zero extent, unequal modes where equal ones are required, ...).
    #[error("shape error: {0}")]
    Shape(String),

    /// Mode index out of range or an invalid mode permutation.
    #[error("mode error: {0}")]
    Mode(String),

    /// Mode plan inconsistent with the input shape.
    #[error("plan error: {0}")]
    Plan(String),

    /// Requested rank exceeds the available dimension.
    #[error("rank error: {0}")]
    Rank(String),

    /// API called in the wrong order (backward before forward, decode without cache, ...).
    #[error("usage error: {0}")]
    Usage(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("training diverged at epoch {epoch}, minibatch {minibatch}: loss = {loss}")]
    Divergence { epoch: usize, minibatch: usize, loss: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Size(_) => "size",
            Error::Shape(_) => "shape",
            Error::Mode(_) => "mode",
            Error::Plan(_) => "plan",
            Error::Rank(_) => "rank",
            Error::Usage(_) => "usage",
            Error::DegenerateInput(_) => "degenerate_input",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Format { .. } => "format",
            Error::Divergence { .. } => "divergence",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
