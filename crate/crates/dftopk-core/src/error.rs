use thiserror::Error;

/// Library-wide error type. Input validation is done eagerly at the public
/// API boundary so the numeric kernels can assume well-formed data.
#[derive(Debug, Error)]
pub enum Error {
    #[error("need at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("non-finite score {value} at index {index}")]
    NonFiniteScore { index: usize, value: f64 },
    #[error("k={k} out of range for n={n} (need 1 <= k <= n-1)")]
    KOutOfRange { k: usize, n: usize },
    #[error("top-K count {k} out of range for n={n} (need 1 <= K <= n)")]
    TopKCountOutOfRange { k: usize, n: usize },
    #[error("tau must be positive and finite, got {0}")]
    InvalidTau(f64),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("label at index {0} must be 0 or 1")]
    InvalidLabel(usize),
    #[error("need at least {required} positive label(s), got {actual}")]
    TooFewPositives { required: usize, actual: usize },
    #[error("m={m} out of range for n={n} (need 1 <= m <= n)")]
    MOutOfRange { m: usize, n: usize },
    #[error("quota order violated: m_ranking={m_ranking} > m_retrieval={m_retrieval}")]
    QuotaOrder {
        m_ranking: usize,
        m_retrieval: usize,
    },
    #[error("min adjacent gap {gap:e} too small for finite-difference step {step:e}")]
    GapTooSmall { gap: f64, step: f64 },
    #[error("invalid value for `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("dataset line {line}: {message}")]
    DatasetFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
