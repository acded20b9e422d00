use thiserror::Error;

/// Errors raised by the model, sampler and file-format layers.
///
/// Member indices carried in messages are 1-based, matching the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("member {member} out of range 1..={n_members}")]
    MemberOutOfRange { member: usize, n_members: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid stick-breaking weights: {0}")]
    InvalidSticks(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("no feasible infector for member {member} in the current augmented state")]
    ZeroWeightTransmission { member: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io(_) | Error::ZeroWeightTransmission { .. } | Error::Initialization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
