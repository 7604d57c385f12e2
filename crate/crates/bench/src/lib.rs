//! Benchmark layer: localization metrics, seeded random search over the
//! hyperparameter domains, and manifest-driven experiments.

mod error;
pub mod experiment;
pub mod metrics;
pub mod search;

pub use error::{Error, Result, StageExt};
