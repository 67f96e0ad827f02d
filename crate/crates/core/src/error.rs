use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("softmax: row {row} is fully masked")]
    FullyMaskedRow { row: usize },

    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("svd did not converge after {sweeps} sweeps")]
    SvdNoConvergence { sweeps: usize },

    #[error("variable is not recorded on this tape")]
    UnrecordedVar,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed tree in sentence {index}: {reason}")]
    MalformedTree { index: usize, reason: String },

    #[error("sentence is not projective")]
    NonProjective,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("sequence of length {len} exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("batch has no masked positions")]
    NoMaskedPositions,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
