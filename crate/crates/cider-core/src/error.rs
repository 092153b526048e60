use thiserror::Error;

/// Crate-wide error type.
///
/// `Dimension` and `Contract` are programming/contract violations,
/// `Numeric` means a computation left the finite-float domain, and
/// `Parse`/`Io` come from loaders and writers.
#[derive(Debug, Error)]
pub enum CiderError {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    Numeric { op: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error in {file} at line {line}: {detail}")]
    Parse {
        file: String,
        line: usize,
        detail: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, CiderError>;

impl CiderError {
    pub fn contract(msg: impl Into<String>) -> Self {
        CiderError::Contract(msg.into())
    }

    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        CiderError::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CiderError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
