use crate::tensor::{Scalar, Tensor};

use super::{MetricError, Prf};

/// How the greedy-match sums are normalized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BertScoreNormalization {
    /// Recall averages over reference rows, precision over candidate rows.
    #[default]
    Standard,
    /// Recall's sum over reference rows is divided by the candidate length and
    /// precision's sum over candidate rows by the reference length. Values can
    /// leave `[0, 1]` when lengths differ; kept only for comparison with
    /// numbers computed that way.
    SwappedLengths,
}

/// Greedy cosine matching between candidate and reference token vectors.
/// Rows are unit-normalized internally.
pub fn bertscore<T: Scalar>(
    candidate: &Tensor<T>,
    reference: &Tensor<T>,
    normalization: BertScoreNormalization,
) -> Result<Prf, MetricError> {
    if candidate.is_empty() || candidate.rows() == 0 {
        return Err(MetricError::Empty("candidate"));
    }
    if reference.is_empty() || reference.rows() == 0 {
        return Err(MetricError::Empty("reference"));
    }
    if candidate.cols() != reference.cols() {
        return Err(MetricError::DimMismatch {
            candidate: candidate.cols(),
            reference: reference.cols(),
        });
    }
    let cand = unit_rows(candidate, "candidate")?;
    let refs = unit_rows(reference, "reference")?;

    let mut best_for_ref = vec![f64::NEG_INFINITY; refs.len()];
    let mut best_for_cand = vec![f64::NEG_INFINITY; cand.len()];
    for (i, r) in refs.iter().enumerate() {
        for (j, c) in cand.iter().enumerate() {
            let sim: f64 = r.iter().zip(c).map(|(a, b)| a * b).sum();
            best_for_ref[i] = best_for_ref[i].max(sim);
            best_for_cand[j] = best_for_cand[j].max(sim);
        }
    }
    let (ref_den, cand_den) = match normalization {
        BertScoreNormalization::Standard => (refs.len(), cand.len()),
        BertScoreNormalization::SwappedLengths => (cand.len(), refs.len()),
    };
    let recall = best_for_ref.iter().sum::<f64>() / ref_den as f64;
    let precision = best_for_cand.iter().sum::<f64>() / cand_den as f64;
    Ok(Prf::new(recall, precision))
}

fn unit_rows<T: Scalar>(m: &Tensor<T>, side: &'static str) -> Result<Vec<Vec<f64>>, MetricError> {
    (0..m.rows())
        .map(|r| {
            let row: Vec<f64> = m.row(r).iter().map(|x| x.to_f64_lossy()).collect();
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(MetricError::ZeroVector { side, row: r });
            }
            Ok(row.into_iter().map(|x| x / norm).collect())
        })
        .collect()
}
