use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("bad magic: expected \"MIXQ\"")]
    BadMagic,

    #[error("version mismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(u64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate fit for row {row}: zero spread")]
    DegenerateFit { row: usize },

    #[error("no construction for order {order} (tried: {tried})")]
    NoConstruction { order: usize, tried: String },

    #[error("matrix is not Hadamard: {0}")]
    NotHadamard(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("undefined delta: {0}")]
    UndefinedDelta(String),

    #[error("region not rotation-equivariant: {0}")]
    NotRotationEquivariant(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short identifier, used by the CLI and in reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::BadMagic => "bad_magic",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::UnsupportedDtype(_) => "unsupported_dtype",
            Error::TruncatedPayload { .. } => "truncated_payload",
            Error::TrailingBytes(_) => "trailing_bytes",
            Error::InvalidParams(_) => "invalid_params",
            Error::DegenerateFit { .. } => "degenerate_fit",
            Error::NoConstruction { .. } => "no_construction",
            Error::NotHadamard(_) => "not_hadamard",
            Error::Parse { .. } => "parse",
            Error::UndefinedDelta(_) => "undefined_delta",
            Error::NotRotationEquivariant(_) => "not_rotation_equivariant",
            Error::TooLarge(_) => "too_large",
            Error::Stage { .. } => "stage",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
