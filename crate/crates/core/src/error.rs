use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state became non-finite at t = {time:.4} s")]
    NonFiniteState { time: f64 },

    #[error("vector length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite input to {0}")]
    NonFiniteInput(&'static str),

    #[error("non-finite loss during PPO update ({0})")]
    NonFiniteLoss(&'static str),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("corrupt log at record {index}: {reason}")]
    CorruptLog { index: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
