use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or lengths that do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Input outside the mathematical domain of an operation (e.g. off-manifold point).
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid argument value (empty input, non-positive variance, ...).
    #[error("argument error: {0}")]
    Argument(String),

    /// A computation produced a non-finite or degenerate value.
    #[error("numerical error in {op}: {detail}")]
    Numerical { op: String, detail: String },

    /// Malformed binary payload (checkpoint or feature file).
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    /// Malformed `key = value` configuration text.
    #[error("config error (line {line}): {detail}")]
    Config { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn numerical(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            op: op.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn dim(detail: impl Into<String>) -> Self {
        Error::Dimension(detail.into())
    }

    pub(crate) fn arg(detail: impl Into<String>) -> Self {
        Error::Argument(detail.into())
    }
}
