//! Research-highlight generation with a pointer-generator network.
//!
//! The crate is split along the pipeline:
//!
//! - [`corpus`]: paper records, preprocessing, vocabularies, splits and statistics.
//! - [`embedding`]: the input embedding layer (learned table or contextual vectors)
//!   and the on-disk contextual embedding cache.
//! - [`model`]: the pointer-generator network with attention and coverage, its
//!   training loop, beam search and checkpoints.
//! - [`metrics`]: ROUGE-n, ROUGE-L, METEOR and BERTScore.
//! - [`energy`]: carbon-footprint accounting for training runs.

pub mod corpus;
pub mod embedding;
pub mod energy;
pub mod metrics;
pub mod model;
pub mod tensor;

pub use tensor::{Scalar, Tensor};

/// Version string stamped into every artifact written by this crate.
pub const CODE_VERSION: &str = concat!("highlights-core/", env!("CARGO_PKG_VERSION"));
