use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("action violates the environment constraint: {0}")]
    ConstraintViolation(String),

    #[error("episode already finished")]
    EpisodeDone,

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("truncated normal rejection sampler gave up after {0} attempts")]
    RejectionLimit(usize),

    #[error("history has zero likelihood under its generating latent")]
    ImpossibleHistory,

    #[error("training diverged at episode {episode}: {what} is not finite")]
    Diverged { episode: usize, what: &'static str },

    #[error("latent does not belong to the {0} environment")]
    LatentMismatch(&'static str),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
