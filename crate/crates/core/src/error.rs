use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (‖m + mᵀ‖_F = {asymmetry:e})")]
    NotSkew { asymmetry: f64 },

    #[error("matrix is not a rotation (‖mᵀm − I‖_F = {orthogonality:e}, det = {det})")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("{what}: expected {expected}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("concentration eps = {eps:e} outside supported range [{min:e}, {max:e}]")]
    EpsOutOfRange { eps: f64, min: f64, max: f64 },

    #[error("batch of {n} exceeds the exact-solver cap of {cap}; subsample first")]
    BatchTooLarge { n: usize, cap: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("config: missing required field `{0}`")]
    MissingField(String),

    #[error("csv row {row}: {msg}")]
    Csv { row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
