use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Structural problems found while decoding bit tensors, model files,
/// checkpoints and cycle archives.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated input: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("{0} trailing bytes after footer")]
    TrailingBytes(usize),
    #[error("non-zero pad bits in final byte")]
    NonZeroPadding,
    #[error("unknown layer kind code {0}")]
    UnknownLayerKind(u8),
    #[error("config digest does not match layer descriptors")]
    DigestMismatch,
    #[error("shape inconsistency: {0}")]
    ShapeInconsistency(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("format: {0}")]
    Format(#[from] FormatError),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("non-finite gradient in layer {layer} at index {index}")]
    NonFiniteGradient { layer: usize, index: usize },
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("no gait: {0}")]
    NoGait(String),
    #[error("data: {0}")]
    Data(String),
    #[error("enrollment: {0}")]
    Enrollment(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Short machine-readable category used in `error:<category>:` prefixes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Parameter(_) => "parameter",
            Error::Usage(_) => "usage",
            Error::Format(_) => "format",
            Error::Config { .. } => "config",
            Error::NonFiniteGradient { .. } | Error::Diverged { .. } => "training",
            Error::NoGait(_) => "no-gait",
            Error::Data(_) => "data",
            Error::Enrollment(_) => "enrollment",
            Error::Io { .. } => "io",
        }
    }
}
