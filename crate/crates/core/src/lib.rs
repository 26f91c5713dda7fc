//! Latent-space uncertainty interpretation for frozen linear-softmax
//! classifiers over precomputed embeddings.
//!
//! The pipeline has two phases. A linear-softmax head is trained on sequence
//! embeddings and frozen. A variational plug-in ([`cue::CueModel`]) is then
//! trained between the embeddings and the frozen head so that reconstructed
//! embeddings keep the head's prediction but carry more predictive entropy.
//! The [`interpret`] module ranks latent dimensions and input tokens by how
//! much they drive that perturbation, and [`metrics`] reports calibration.

pub mod benchmark;
pub mod checkpoint;
pub mod classifier;
mod codec;
pub mod cue;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod interpret;
pub mod metrics;
pub mod numerics;

pub use error::{CueError, Result};
