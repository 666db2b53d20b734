use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("label out of range: {label} (num_classes = {num_classes})")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("architecture mismatch between warm-start model and requested architecture")]
    ArchitectureMismatch,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("source has no pool")]
    SourceHasNoPool,
    #[error("domain {domain} out of range (K = {k})")]
    DomainOutOfRange { domain: usize, k: usize },
    #[error("pool index {index} out of range for domain {domain} (pool size {size})")]
    PoolIndexOutOfRange { domain: usize, index: usize, size: usize },
    #[error("empty pool")]
    EmptyPool,
    #[error("requested {requested} samples but pool of domain {domain} holds {available}")]
    PoolTooSmall { domain: usize, requested: usize, available: usize },
    #[error("costs must be positive and strictly increasing: {0:?}")]
    NonIncreasingCosts(Vec<f64>),
    #[error("expected {expected} costs, got {got}")]
    CostLengthMismatch { expected: usize, got: usize },
    #[error("not a probability vector (sum = {sum})")]
    NotASimplex { sum: f64 },
    #[error("no usable fidelity")]
    NoUsableFidelity,
    #[error("point sets differ in size: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("class {class} missing from {side} domain")]
    MissingClass { class: usize, side: &'static str },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },
    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
