//! Simulation core: the vascular graph nanodevices circulate through, the
//! discrete-time circulation/energy/reporting simulator, and the builder that
//! turns simulator reports into labeled circulation-time sets.

pub mod dataset;
mod error;
pub mod geometry;
pub mod nanosim;
pub mod topology;

pub use error::{Error, Result};
pub use fgl_autodiff::rng;
