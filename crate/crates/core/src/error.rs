use thiserror::Error;

/// Errors produced anywhere in the precoding pipeline.
#[derive(Debug, Error)]
pub enum SlpError {
    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("channel is rank deficient: numerical rank {rank} with {users} users")]
    RankDeficient { rank: usize, users: usize },

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SlpError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        SlpError::DimensionMismatch(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        SlpError::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        SlpError::Format {
            offset,
            message: msg.into(),
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, SlpError::NonFinite { .. } | SlpError::RankDeficient { .. })
    }
}

pub type Result<T, E = SlpError> = std::result::Result<T, E>;
