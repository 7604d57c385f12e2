use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] fgl_autodiff::Error),
    #[error(transparent)]
    Core(#[from] fgl_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input set")]
    EmptySet,
    #[error("no training data: {0}")]
    NoTrainingData(String),
    #[error("label {label} outside 0..{n_classes}")]
    UnknownLabel { label: usize, n_classes: usize },
    #[error("{n} values cannot support {k} mixture components")]
    TooFewValues { n: usize, k: usize },
    #[error("log-likelihood decreased at iteration {iter}: {prev} -> {next}")]
    NonMonotone { iter: usize, prev: f64, next: f64 },
    #[error("augmentation strategy needs a generator")]
    MissingGenerator,
    #[error("dataset must be normalized before {0}")]
    NotNormalized(&'static str),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
