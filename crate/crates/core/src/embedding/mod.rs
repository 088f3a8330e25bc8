//! The input embedding layer and its backends.
//!
//! Every backend implements [`EmbeddingProvider`]:
//!
//! - [`LearnedProvider`]: a view over the trainable table held in the model
//!   parameters. Rows depend only on token identity.
//! - [`CacheProvider`]: contextual vectors precomputed by a pre-trained encoder
//!   and stored in an [`EmbeddingCache`] file, keyed by document and input type.
//! - [`LiveProvider`]: wraps any [`ContextualEncoder`] and encodes on demand.
//!   [`SyntheticEncoder`] is a small deterministic stand-in used to build caches
//!   and to run everything without downloading a model.

mod cache;
mod provider;
mod synthetic;

pub use cache::{read_cache, write_cache, CacheRecord, EmbeddingCache, RecordKey};
pub use provider::{
    CacheProvider, ContextualEncoder, EmbeddingProvider, LearnedProvider, LiveProvider, ProviderKind,
    CONTEXTUAL_DIM, LEARNED_DIM,
};
pub use synthetic::SyntheticEncoder;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no cached embeddings for document `{id}` ({input_type})")]
    CacheMiss { id: String, input_type: String },
    #[error("embedding width {found} does not match the expected {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("cached record `{id}` holds {cached} tokens but the sequence has {requested}")]
    LengthMismatch {
        id: String,
        cached: usize,
        requested: usize,
    },
    #[error("corrupt embedding cache: {0}")]
    Corrupt(String),
    #[error("embedding cache is truncated: {0}")]
    Truncated(String),
    #[error("cannot embed an empty sequence")]
    EmptySequence,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;
