use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid N:M config: {0}")]
    InvalidConfig(String),

    #[error("divisibility error: {0}")]
    Divisibility(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("infeasible flow network: {0}")]
    Infeasible(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("singular normal-equation system (enable regularization)")]
    SingularSystem,

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unknown mask strategy '{0}'")]
    UnknownStrategy(String),

    #[error("missing argument: {0}")]
    MissingArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
