use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f32 },

    #[error("value {0} exceeds the E2M1 range and saturation is disabled")]
    Overflow(f32),

    #[error("expected a strictly positive finite value, got {0}")]
    NotPositive(f64),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scale code {code:#04x} in block {block}")]
    CorruptScale { block: usize, code: u8 },

    #[error("operands incompatible: {0}")]
    Incompatible(String),

    #[error("reference tensor is all zero")]
    ZeroSignal,

    #[error("malformed container {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
