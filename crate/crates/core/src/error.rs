use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A Gaussian whose scale, rotation or covariance cannot be used.
    #[error("invalid primitive #{index}: {reason}")]
    InvalidPrimitive { index: usize, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Malformed file content. `offset` is a byte offset into the input.
    #[error("parse error in {what} at byte {offset}: {message}")]
    Parse {
        what: String,
        offset: usize,
        message: String,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("degenerate ray: |eta_z| = {0:e}")]
    DegenerateRay(f64),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("undefined mean: every class was excluded")]
    UndefinedMean,

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: impl Into<String>, offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 usage/config, 3 data mismatch, 4 numeric failure, 1 other.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) | Error::Parse { .. } | Error::Validation(_) => 2,
            Error::ShapeMismatch(_) => 3,
            Error::Numeric(_) | Error::InvalidPrimitive { .. } | Error::DegenerateRay(_) => 4,
            Error::UndefinedMean => 3,
            Error::Capacity(_) | Error::Structural(_) | Error::Io { .. } => 1,
        }
    }
}

/// Byte offset of a serde_json error within `text`.
pub(crate) fn json_offset(text: &str, err: &serde_json::Error) -> usize {
    let (line, column) = (err.line(), err.column());
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
