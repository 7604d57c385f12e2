use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("topology failed validation:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("unknown region id {0}")]
    UnknownRegion(usize),
    #[error("singular first-return system: {0}")]
    Singular(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("unsupported {what} version {found} (expected {expected})")]
    Version { what: &'static str, found: u32, expected: u32 },
    #[error("{path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
