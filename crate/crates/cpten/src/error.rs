use thiserror::Error;

#[derive(Error, Debug)]
pub enum CpError {
    #[error("index entry {entry} out of range 1..={dim}")]
    InvalidIndex { entry: usize, dim: usize },

    #[error("index has {got} entries, tensor order is {expected}")]
    WrongOrder { got: usize, expected: usize },

    #[error("shape mismatch: ({m1},{n1}) vs ({m2},{n2})")]
    ShapeError {
        m1: usize,
        n1: usize,
        m2: usize,
        n2: usize,
    },

    #[error("tensor has a negative entry {value} at {index:?}")]
    NotNonnegative { index: Vec<usize>, value: f64 },

    #[error("dimension {n} exceeds the brute-force oracle bound {bound}")]
    DimensionTooLarge { n: usize, bound: usize },

    #[error("relaxation level t={t} too low: requires 2t >= {required}")]
    LevelTooLow { t: usize, required: usize },

    #[error("SOS objective degree must be even and >= 2, got {0}")]
    InvalidDegree(usize),

    #[error("positive entry {index:?} is covered by no clique; tensor is not completely positive")]
    UncoveredPositiveEntry { index: Vec<usize> },

    #[error("atom extraction failed: {0}")]
    ExtractionFailed(String),

    #[error("numerical failure in solver: {0}")]
    NumericalFailure(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("tensor contains a non-finite entry at {index:?}")]
    NonFiniteEntry { index: Vec<usize> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CpError>;
