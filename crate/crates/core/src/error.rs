use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid total order: {0}")]
    InvalidOrder(String),
    #[error("cannot split a singleton region")]
    SingletonRegion,

    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("input length {got} does not match program input length {expected}")]
    InputLengthMismatch { expected: usize, got: usize },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),

    #[error("variance must be non-negative, got {0}")]
    NegativeVariance(f64),
    #[error("monte carlo batch is empty")]
    EmptyBatch,

    #[error("no target-reaching paths available")]
    NoPaths,
    #[error("no target-reaching path found after {attempts} attempts")]
    NoPathsFound { attempts: usize },

    #[error("weight group list is empty")]
    EmptyList,
    #[error("cannot split singleton weight group {0}")]
    SingletonGroup(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
