use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] alpha_core::Error),

    #[error(transparent)]
    Lab(#[from] alpha_lab::LabError),

    #[error("{0}")]
    Check(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    /// Process exit status: 2 for usage errors, 3 for solver non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            ServiceError::Usage(_) => 2,
            ServiceError::Core(alpha_core::Error::NoConvergence { .. })
            | ServiceError::Lab(alpha_lab::LabError::Core(alpha_core::Error::NoConvergence { .. })) => 3,
            _ => 1,
        }
    }
}
