use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingProvider;

use super::{bertscore, meteor, rouge_l, rouge_n, BertScoreNormalization, MetricError, Prf};

/// Corpus-level scores, each the arithmetic mean of per-example values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
    pub meteor: f64,
    pub bertscore: Prf,
    pub n_examples: usize,
}

impl MetricReport {
    pub const HEADER: &'static str = concat!(
        "group                 n      R-1    R-2    R-L    METEOR  BS-P   BS-R   BS-F1\n",
        "--------------------  -----  -----  -----  -----  ------  -----  -----  -----",
    );

    /// One table row; scores are shown ×100 with two decimals.
    pub fn row(&self, group: &str) -> String {
        format!(
            "{:<20}  {:>5}  {:>5.2}  {:>5.2}  {:>5.2}  {:>6.2}  {:>5.2}  {:>5.2}  {:>5.2}",
            group,
            self.n_examples,
            100.0 * self.rouge1.f1,
            100.0 * self.rouge2.f1,
            100.0 * self.rouge_l.f1,
            100.0 * self.meteor,
            100.0 * self.bertscore.precision,
            100.0 * self.bertscore.recall,
            100.0 * self.bertscore.f1,
        )
    }

    /// `(metric, value)` pairs in display units (×100).
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        let mut out = Vec::new();
        for (name, p) in [("rouge1", self.rouge1), ("rouge2", self.rouge2), ("rougeL", self.rouge_l)] {
            let [r, pr, f] = prf_names(name);
            out.push((r, p.recall));
            out.push((pr, p.precision));
            out.push((f, p.f1));
        }
        out.push(("meteor", self.meteor));
        out.push(("bertscore_r", self.bertscore.recall));
        out.push(("bertscore_p", self.bertscore.precision));
        out.push(("bertscore_f1", self.bertscore.f1));
        out.into_iter().map(|(k, v)| (k, round2(100.0 * v))).collect()
    }

    /// Unweighted mean of several reports; `n_examples` is summed.
    pub fn mean(reports: &[MetricReport]) -> MetricReport {
        MetricReport {
            rouge1: Prf::mean(reports.iter().map(|r| &r.rouge1)),
            rouge2: Prf::mean(reports.iter().map(|r| &r.rouge2)),
            rouge_l: Prf::mean(reports.iter().map(|r| &r.rouge_l)),
            meteor: if reports.is_empty() {
                0.0
            } else {
                reports.iter().map(|r| r.meteor).sum::<f64>() / reports.len() as f64
            },
            bertscore: Prf::mean(reports.iter().map(|r| &r.bertscore)),
            n_examples: reports.iter().map(|r| r.n_examples).sum(),
        }
    }
}

fn prf_names(metric: &str) -> [&'static str; 3] {
    match metric {
        "rouge1" => ["rouge1_r", "rouge1_p", "rouge1_f1"],
        "rouge2" => ["rouge2_r", "rouge2_p", "rouge2_f1"],
        _ => ["rougeL_r", "rougeL_p", "rougeL_f1"],
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Scores one candidate against one reference. BERTScore uses `provider` for
/// both sides and is 0 when either side is empty.
pub fn evaluate_pair(
    candidate: &[String],
    reference: &[String],
    provider: &dyn EmbeddingProvider,
    normalization: BertScoreNormalization,
) -> Result<MetricReport, MetricError> {
    let bs = if candidate.is_empty() || reference.is_empty() {
        Prf::default()
    } else {
        let embed = |t: &[String]| {
            provider
                .embed_sequence(t, None)
                .map_err(|e| MetricError::Embedding(e.to_string()))
        };
        bertscore(&embed(candidate)?, &embed(reference)?, normalization)?
    };
    Ok(MetricReport {
        rouge1: rouge_n(candidate, reference, 1),
        rouge2: rouge_n(candidate, reference, 2),
        rouge_l: rouge_l(candidate, reference),
        meteor: meteor(candidate, reference),
        bertscore: bs,
        n_examples: 1,
    })
}

/// Per-example metrics averaged over `pairs` of `(candidate, reference)`.
pub fn evaluate_corpus(
    pairs: &[(Vec<String>, Vec<String>)],
    provider: &dyn EmbeddingProvider,
    normalization: BertScoreNormalization,
) -> Result<MetricReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::NoPairs);
    }
    let per_example = pairs
        .iter()
        .map(|(c, r)| evaluate_pair(c, r, provider, normalization))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricReport::mean(&per_example))
}
