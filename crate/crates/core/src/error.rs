use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("block index {index} out of range for a partition with {blocks} blocks")]
    BlockIndex { index: usize, blocks: usize },

    #[error("slice at frequency index {k} is singular or near-singular (reciprocal condition {rcond:.3e})")]
    SingularSlice { k: usize, rcond: f64 },

    #[error("diagonal entry ({i}, {i}) at frequency index {k} has nonpositive real part {value:.3e}")]
    NonPositiveDiagonal { i: usize, k: usize, value: f64 },

    #[error("eigendecomposition failed: input contains non-finite values")]
    NonFinite,

    #[error("non-finite value in `{variable}` at iteration {iteration}")]
    Diverged { variable: &'static str, iteration: usize },

    #[error("unstable structure: {0}")]
    UnstableStructure(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
