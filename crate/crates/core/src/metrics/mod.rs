//! Summary-quality metrics: ROUGE-n, ROUGE-L, METEOR and BERTScore.
//!
//! All scores are in `[0, 1]`; reports display them ×100 with two decimals.

mod bertscore;
mod meteor;
mod report;
mod rouge;

pub use bertscore::{bertscore, BertScoreNormalization};
pub use meteor::{meteor, meteor_details, MeteorDetails, EXHAUSTIVE_CHUNK_SEARCH_LIMIT};
pub use report::{evaluate_corpus, evaluate_pair, MetricReport};
pub use rouge::{lcs_len, rouge_l, rouge_n};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("embedding widths differ: candidate {candidate}, reference {reference}")]
    DimMismatch { candidate: usize, reference: usize },
    #[error("{side} row {row} is a zero vector; cosine similarity is undefined")]
    ZeroVector { side: &'static str, row: usize },
    #[error("{0} embedding matrix is empty")]
    Empty(&'static str),
    #[error("no example pairs to evaluate")]
    NoPairs,
    #[error("embedding failed: {0}")]
    Embedding(String),
}

/// Recall, precision and their harmonic mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(recall: f64, precision: f64) -> Self {
        let f1 = if recall + precision > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            recall,
            precision,
            f1,
        }
    }

    /// Componentwise mean; F1 is averaged, not recomputed.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Prf>) -> Prf {
        let mut n = 0usize;
        let mut acc = Prf::default();
        for p in items {
            acc.recall += p.recall;
            acc.precision += p.precision;
            acc.f1 += p.f1;
            n += 1;
        }
        if n == 0 {
            return acc;
        }
        let n = n as f64;
        Prf {
            recall: acc.recall / n,
            precision: acc.precision / n,
            f1: acc.f1 / n,
        }
    }
}
