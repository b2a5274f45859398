use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unauthorized: {0}")]
    Unauthorized(String),

    #[error("forbidden: {0}")]
    Ownership(String),

    #[error("invalid request: {0}")]
    Validation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),

    #[error("log replay failed: {0}")]
    Replay(shelflife_core::Error),

    #[error("setup error: {0}")]
    Setup(String),
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
