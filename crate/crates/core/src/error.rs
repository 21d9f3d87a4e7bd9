use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid `{field}`: {reason}")]
    Invariant { field: String, reason: String },

    #[error("shape mismatch in head `{head}`: {detail}")]
    Shape { head: String, detail: String },

    #[error("no_reference: at least one reference lane is required")]
    NoReference,

    #[error("off_map: ego is {0:.2} m from the nearest lane")]
    OffMap(f64),

    #[error("sample count {0} is not a perfect square")]
    NonSquareCount(usize),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    Length { left: usize, right: usize },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("unknown {kind} `{name}` (known: {known})")]
    Unknown {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
