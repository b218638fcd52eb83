use thiserror::Error;

#[derive(Debug, Error)]
pub enum LecError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("fit did not converge: {0}")]
    NoConvergence(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LecError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LecError {
    LecError::InvalidParameter(msg.into())
}
