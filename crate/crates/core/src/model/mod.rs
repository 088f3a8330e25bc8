//! Pointer-generator network with attention and coverage.
//!
//! A bidirectional LSTM encodes the source; an LSTM decoder attends over the
//! encoder states with additive attention that also sees the coverage vector
//! (the running sum of earlier attention). Each step mixes a vocabulary
//! softmax with a copy distribution over source positions, gated by the
//! generation probability. Parameters are generic over [`Scalar`] so the same
//! code trains at `f32` and is gradient-checked at `f64`.
//!
//! [`Scalar`]: crate::tensor::Scalar

mod checkpoint;
mod config;
mod decode;
mod network;
mod params;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::{EmbeddingMode, ModelConfig};
pub use decode::{decode_beam, decode_greedy, Decoded};
pub use network::{
    coverage_loss, extended_distribution, step_loss, update_coverage, DecoderState, EncoderOutput, SequenceForward,
    StepCache, StepLoss, StepOutput, PROB_FLOOR,
};
pub use params::{Attention, Linear, Lstm, Params, Pointer};
pub use train::{train, validation_loss, LogRecord, TrainHooks, TrainOutcome, TrainingExample};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("source sequence is empty")]
    EmptySource,
    #[error("contextual embeddings selected but no source embeddings were supplied")]
    MissingSourceEmbeddings,
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("training diverged at iteration {iter} (phase {phase}): loss {loss}")]
    Diverged { iter: usize, phase: u8, loss: f64 },
    #[error("no training examples")]
    EmptyCorpus,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checkpoint does not match the requested configuration: {0}")]
    ConfigMismatch(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ModelError>;
