use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic header in {path}")]
    BadMagic { path: PathBuf },
    #[error("unsupported format version {version}")]
    UnsupportedVersion { version: u8 },
    #[error("unsupported dtype code {code}")]
    UnsupportedDtype { code: u8 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("trailing data: {extra} bytes after payload")]
    TrailingData { extra: usize },
    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("vector with L2 norm below 1e-12 ({what})")]
    ZeroNormVector { what: String },
    #[error("manifest schema error: {0}")]
    SchemaError(String),
    #[error("missing file {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("inconsistent class list: {0}")]
    InconsistentClassList(String),
    #[error("invalid mask {}: {reason}", path.display())]
    InvalidMask { path: PathBuf, reason: String },
    #[error("sample {id}: {reason}")]
    InvalidSample { id: String, reason: String },
    #[error("ground truth has no foreground pixels")]
    EmptyForeground,
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("sample {0} has no attention tensor")]
    MissingAttention(String),
    #[error("sample {0} not found")]
    MissingSample(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("png decode: {0}")]
    PngDecode(#[from] png::DecodingError),
    #[error("png encode: {0}")]
    PngEncode(#[from] png::EncodingError),
    #[error("io failure on {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    /// Stable, machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::BadMagic { .. } => "BadMagic",
            Error::UnsupportedVersion { .. } => "UnsupportedVersion",
            Error::UnsupportedDtype { .. } => "UnsupportedDtype",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::TrailingData { .. } => "TrailingData",
            Error::NonFiniteValue { .. } => "NonFiniteValue",
            Error::InvalidShape { .. } => "InvalidShape",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::GridMismatch(_) => "GridMismatch",
            Error::ZeroNormVector { .. } => "ZeroNormVector",
            Error::SchemaError(_) => "SchemaError",
            Error::MissingFile { .. } => "MissingFile",
            Error::InconsistentClassList(_) => "InconsistentClassList",
            Error::InvalidMask { .. } => "InvalidMask",
            Error::InvalidSample { .. } => "InvalidSample",
            Error::EmptyForeground => "EmptyForeground",
            Error::EmptyInput(_) => "EmptyInput",
            Error::MissingAttention(_) => "MissingAttention",
            Error::MissingSample(_) => "MissingSample",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Numeric(_) => "Numeric",
            Error::Json(_) => "Json",
            Error::PngDecode(_) => "PngDecode",
            Error::PngEncode(_) => "PngEncode",
            Error::IoFailure { .. } => "IoFailure",
            Error::Io(_) => "Io",
        }
    }

    /// True for failures of the numerical pipeline rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::ZeroNormVector { .. } | Error::Numeric(_))
    }
}
