use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bundle must contain at least one good")]
    EmptyBundle,

    #[error("bundle bits {bits:#b} reference goods beyond n = {n}")]
    BundleOutOfRange { bits: u32, n: usize },

    #[error("n = {n} goods is outside the supported range 1..={max}")]
    TooManyGoods { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("covariance matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("conditioning event is vacuous (standardized threshold {alpha:.3} > {limit})")]
    VacuousCondition { alpha: f64, limit: f64 },

    #[error("gave up after {0} consecutive rejected draws with negative valuations")]
    RejectionLimit(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
