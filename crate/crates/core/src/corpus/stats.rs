use serde::{Deserialize, Serialize};

use super::document::{Document, InputType};
use super::encode::compose_input;
use super::preprocess::preprocess;
use super::split::{split_sizes, SplitRatios};
use super::{CorpusError, Result};

/// Dataset statistics in the shape of a dataset-summary table row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub avg_source_words: f64,
    pub avg_highlight_words: f64,
    /// Share of documents whose source is at least 1.5× longer than the highlights.
    pub frac_compression_ge_1_5: f64,
}

impl CorpusStats {
    pub const HEADER: [&'static str; 7] = [
        "Dataset",
        "Train",
        "Val",
        "Test",
        "Average Words (source)",
        "Average Words (highlight)",
        "% compression >= 1.5",
    ];

    pub fn row(&self, name: &str) -> [String; 7] {
        [
            name.to_string(),
            self.n_train.to_string(),
            self.n_val.to_string(),
            self.n_test.to_string(),
            format!("{:.2}", self.avg_source_words),
            format!("{:.2}", self.avg_highlight_words),
            format!("{:.2}", 100.0 * self.frac_compression_ge_1_5),
        ]
    }
}

/// Averages use preprocessed token counts of the composed (uncapped) source.
/// Split counts are the default 80:10:10 sizes for the corpus size.
pub fn corpus_stats(corpus: &[Document], it: InputType) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut src_total = 0usize;
    let mut hl_total = 0usize;
    let mut compressed = 0usize;
    for doc in corpus {
        let src = uncapped_len(doc, it)?;
        let hl = preprocess(&doc.highlights).len();
        src_total += src;
        hl_total += hl;
        if (hl == 0 && src > 0) || (hl > 0 && src as f64 / hl as f64 >= 1.5) {
            compressed += 1;
        }
    }
    let n = corpus.len() as f64;
    let [n_train, n_val, n_test] = split_sizes(corpus.len(), SplitRatios::default())?;
    Ok(CorpusStats {
        n_train,
        n_val,
        n_test,
        avg_source_words: src_total as f64 / n,
        avg_highlight_words: hl_total as f64 / n,
        frac_compression_ge_1_5: compressed as f64 / n,
    })
}

fn uncapped_len(doc: &Document, it: InputType) -> Result<usize> {
    // compose_input caps; count the sections directly but reuse its
    // missing-section checks.
    compose_input(doc, it)?;
    let len = |t: &Option<String>| t.as_deref().map_or(0, |s| preprocess(s).len());
    let abs = preprocess(&doc.abstract_text).len();
    Ok(match it {
        InputType::AbstractOnly => abs,
        InputType::ConclusionOnly => len(&doc.conclusion),
        InputType::IntroductionOnly => len(&doc.introduction),
        InputType::AbstractPlusConclusion => abs + len(&doc.conclusion),
        InputType::IntroductionPlusConclusion => len(&doc.introduction) + len(&doc.conclusion),
    })
}
