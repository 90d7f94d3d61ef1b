use std::path::PathBuf;

/// Errors produced anywhere in the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{op}: expected a {expected} tensor")]
    DType {
        op: &'static str,
        expected: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Divergence { epoch: usize },

    #[error("unsupported format version {found} (this reader handles major version {supported})")]
    Version { found: String, supported: u32 },

    #[error("checksum mismatch in record `{record}`")]
    Checksum { record: String },

    #[error("truncated blob for record `{record}`: expected {expected} bytes, found {found}")]
    Truncated {
        record: String,
        expected: usize,
        found: usize,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("missing model checkpoint: {}", .0.display())]
    MissingCheckpoint(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse error classes; the CLI maps these to exit codes and the C ABI to status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidArgument(_) | Error::Shape { .. } | Error::DType { .. } => {
                ErrorClass::Usage
            }
            Error::NonFinite(_) | Error::Divergence { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
