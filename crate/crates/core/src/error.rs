use thiserror::Error;

pub type Result<T> = std::result::Result<T, MrfError>;

#[derive(Debug, Error)]
pub enum MrfError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The requested operation enumerates too many states.
    #[error("{op} supports at most {cap} nodes, got p = {p}")]
    Capacity { op: &'static str, p: usize, cap: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("AUC undefined: {0}")]
    UndefinedAuc(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MrfError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        MrfError::InvalidInput(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(MrfError::DimensionMismatch { expected, found })
        }
    }
}
