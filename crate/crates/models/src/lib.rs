//! Learning components: a permutation-invariant set classifier, label-conditioned
//! generators of circulation times with their evaluation and augmentation
//! strategies, and a GMM-feature baseline classifier.

pub mod augment;
mod error;
pub mod generative;
pub mod gmm;
pub mod mlp;
pub mod set_transformer;
pub mod training;
pub mod wasserstein;

pub use error::{Error, Result};
