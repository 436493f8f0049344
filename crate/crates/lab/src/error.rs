use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Core(#[from] alpha_core::Error),

    #[error("invalid session configuration: {0}")]
    Config(String),

    #[error("actor for subject {subject} failed in period {period}: {reason}")]
    Actor {
        subject: u32,
        period: u32,
        reason: String,
    },

    #[error("log data error: {0}")]
    Data(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
