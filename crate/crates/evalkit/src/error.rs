#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} is undefined: no voxels to evaluate")]
    Undefined(&'static str),
    #[error("wilcoxon test needs at least 5 non-zero differences, got {0}")]
    TooFewPairs(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
