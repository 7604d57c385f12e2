use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] fgl_core::Error),
    #[error(transparent)]
    Models(#[from] fgl_models::Error),
    #[error(transparent)]
    Autodiff(#[from] fgl_autodiff::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("search: {0}")]
    Search(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

/// Tags a failure with the pipeline stage it came from.
pub trait StageExt<T> {
    fn stage(self, stage: &str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage: stage.to_string(), source: Box::new(e.into()) })
    }
}
