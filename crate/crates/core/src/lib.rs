//! Semi-supervised convolutional networks for human activity recognition.
//!
//! Three model families share one encoder: a supervised CNN, a CNN
//! encoder-decoder trained with a denoising reconstruction cost on the
//! input, and a CNN ladder network that reconstructs every encoder layer
//! through lateral denoising combinators. Backpropagation is hand-written
//! and verified against finite differences.

pub mod baselines;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod layers;
pub mod network;
pub mod numcore;
pub mod objectives;
pub mod training;

pub use error::{Error, Result};
pub use numcore::{Rng, Tensor};
