//! Paper records and everything needed to turn them into model inputs.

mod document;
mod encode;
mod preprocess;
mod split;
mod stats;
mod vocab;

pub use document::{
    load_dataset, load_dataset_with, Document, DroppedRecord, InputType, LoadOptions, LoadReport,
    MIXSUB_DOMAINS,
};
pub use encode::{
    compose_input, decode_extended, encode_document, encode_example, ExampleEncoding,
    MAX_TARGET_TOKENS,
};
pub use preprocess::{join_tokens, preprocess};
pub use split::{kfold_partitions, split, split_sizes, stratified_split, Split, SplitRatios};
pub use stats::{corpus_stats, CorpusStats};
pub use vocab::{build_vocabulary, Vocabulary, PAD, START, STOP, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate document id `{id}` on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("record on line {line} is invalid: {reason}")]
    InvalidRecord { line: usize, reason: String },
    #[error("document `{id}` has no {section} section")]
    MissingSection { id: String, section: &'static str },
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("vocabulary size must be at least 1")]
    ZeroVocabulary,
    #[error("source sequence is empty")]
    EmptySource,
    #[error("split ratios must be non-negative and sum to 1 (got {0:?})")]
    BadRatios([f64; 3]),
    #[error("corpus of {0} documents is too small to split")]
    TooSmall(usize),
    #[error("cannot make {k} folds from {n} documents")]
    BadFolds { k: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, CorpusError>;
