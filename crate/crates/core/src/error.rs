use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("arc-length coordinate {s} outside [0, {length})")]
    OutOfRange { s: f64, length: f64 },
    #[error("ill-conditioned least-squares system: {0}")]
    IllConditioned(String),
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("reference distribution is bound to track `{expected}`, got `{got}`")]
    TrackMismatch { expected: String, got: String },
    #[error("Bernstein index {index} out of range for degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },
    #[error("covariance below variance floor: {0}")]
    SingularCovariance(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("backward called with a stale or missing forward cache")]
    StaleCache,
    #[error("numerical blowup: {0}")]
    NumericalBlowup(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("no future-bearing steps in rollout buffer")]
    NoFutures,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("scripted expert failed: {0}")]
    ExpertFailed(String),
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
