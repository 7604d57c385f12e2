//! Minimal dense-tensor engine with reverse-mode differentiation.
//!
//! Values live in [`Tensor`]s (row-major, `f64`). A [`Tape`] records the
//! operations applied to [`Var`] handles; calling [`Tape::backward`] on a
//! scalar result yields exact gradients for every leaf. Stochastic
//! primitives (dropout, Gaussian sampling) take explicit seeds so a forward
//! pass is a pure function of its inputs.

mod error;
pub mod checkpoint;
pub mod gradcheck;
pub mod nn;
pub mod optim;
pub mod rng;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, ParamRecord, CHECKPOINT_VERSION};
pub use error::{Error, Result};
pub use gradcheck::finite_diff_check;
pub use nn::{Bound, ParamId, ParamStore};
pub use optim::{cosine_lr, Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
