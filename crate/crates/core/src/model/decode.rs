//! Greedy and beam-search decoding over the extended vocabulary.

use std::cmp::Ordering;

use crate::corpus::{decode_extended, ExampleEncoding, Vocabulary, PAD, START, STOP, UNK};
use crate::tensor::{Scalar, Tensor};

use super::network::{extended_distribution, DecoderState, EncoderOutput};
use super::params::Params;
use super::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    /// Extended-vocabulary ids, STOP excluded.
    pub ids: Vec<usize>,
    pub tokens: Vec<String>,
    /// Sum of log-probabilities of the emitted ids (STOP included when reached).
    pub log_prob: f64,
}

/// The `k` most probable emittable ids, best first; ties go to the lower id.
/// PAD, START and UNK are skipped unless nothing else has non-zero probability.
fn top_candidates<T: Scalar>(dist: &[T], k: usize) -> Vec<(usize, f64)> {
    let pick = |allow_unk: bool| {
        let mut c: Vec<(usize, f64)> = dist
            .iter()
            .enumerate()
            .filter(|&(id, _)| id != PAD && id != START && (allow_unk || id != UNK))
            .map(|(id, &p)| (id, p.to_f64_lossy()))
            .filter(|&(_, p)| p > 0.0)
            .collect();
        c.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        c.truncate(k);
        c
    };
    let c = pick(false);
    if c.is_empty() {
        let c = pick(true);
        if c.is_empty() {
            return vec![(UNK, 0.0)];
        }
        return c;
    }
    c
}

struct Prepared<'a, T> {
    params: &'a Params<T>,
    ex: &'a ExampleEncoding,
    enc: EncoderOutput<T>,
}

impl<T: Scalar> Prepared<'_, T> {
    fn distribution(&self, state: &DecoderState<T>, last: usize) -> (Vec<T>, DecoderState<T>) {
        let input = if last < self.params.vocab_len() { last } else { UNK };
        let step = self.params.step(&self.enc, state, input);
        let dist = extended_distribution(
            &step.p_vocab,
            &step.attention,
            step.p_gen,
            &self.ex.source_ext_ids,
            self.ex.extended_len(),
        );
        (dist, step.next)
    }
}

fn prepare<'a, T: Scalar>(
    params: &'a Params<T>,
    ex: &'a ExampleEncoding,
    external: Option<&Tensor<T>>,
) -> Result<Prepared<'a, T>> {
    let raw = params.source_embeddings(ex, external)?;
    let enc = params.encode(&raw)?;
    Ok(Prepared { params, ex, enc })
}

fn finish(ids: Vec<usize>, log_prob: f64, vocab: &Vocabulary, ex: &ExampleEncoding) -> Decoded {
    let tokens = decode_extended(&ids, vocab, &ex.oov_tokens);
    Decoded { ids, tokens, log_prob }
}

/// Feed back the most probable emittable token until STOP or `max_len` steps.
pub fn decode_greedy<T: Scalar>(
    params: &Params<T>,
    ex: &ExampleEncoding,
    external: Option<&Tensor<T>>,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Decoded> {
    let p = prepare(params, ex, external)?;
    let mut state = params.initial_state(&p.enc);
    let mut last = START;
    let mut ids = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_len {
        let (dist, next) = p.distribution(&state, last);
        let (id, prob) = top_candidates(&dist, 1)[0];
        log_prob += prob.ln();
        if id == STOP {
            break;
        }
        ids.push(id);
        last = id;
        state = next;
    }
    Ok(finish(ids, log_prob, vocab, ex))
}

#[derive(Clone)]
struct Hypothesis<T> {
    ids: Vec<usize>,
    log_prob: f64,
    state: DecoderState<T>,
}

impl<T> Hypothesis<T> {
    fn last(&self) -> usize {
        self.ids.last().copied().unwrap_or(START)
    }

    fn avg_log_prob(&self) -> f64 {
        self.log_prob / self.ids.len().max(1) as f64
    }
}

/// Beam search of width `beam_size`. Finished hypotheses (ending in STOP)
/// are ranked by mean log-probability per token.
pub fn decode_beam<T: Scalar>(
    params: &Params<T>,
    ex: &ExampleEncoding,
    external: Option<&Tensor<T>>,
    vocab: &Vocabulary,
    beam_size: usize,
    max_len: usize,
) -> Result<Decoded> {
    let k = beam_size.max(1);
    let p = prepare(params, ex, external)?;
    let mut live = vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        state: params.initial_state(&p.enc),
    }];
    let mut done: Vec<Hypothesis<T>> = Vec::new();
    for _ in 0..max_len {
        if done.len() >= k || live.is_empty() {
            break;
        }
        let mut expanded = Vec::new();
        for hyp in &live {
            let (dist, next) = p.distribution(&hyp.state, hyp.last());
            for (id, prob) in top_candidates(&dist, 2 * k) {
                let mut ids = hyp.ids.clone();
                ids.push(id);
                expanded.push(Hypothesis {
                    ids,
                    log_prob: hyp.log_prob + prob.ln(),
                    state: next.clone(),
                });
            }
        }
        // Stable sort keeps expansion order among equal scores.
        expanded.sort_by(|a, b| b.log_prob.partial_cmp(&a.log_prob).unwrap_or(Ordering::Equal));
        live.clear();
        for hyp in expanded {
            if hyp.last() == STOP {
                done.push(hyp);
            } else {
                live.push(hyp);
            }
            if live.len() == k || done.len() == k {
                break;
            }
        }
    }
    if done.is_empty() {
        done = live;
    }
    let best = done
        .into_iter()
        .reduce(|best, h| if h.avg_log_prob() > best.avg_log_prob() { h } else { best })
        .expect("at least one hypothesis");
    let mut ids = best.ids;
    if ids.last() == Some(&STOP) {
        ids.pop();
    }
    Ok(finish(ids, best.log_prob, vocab, ex))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_skip_unk_unless_forced() {
        let dist = [0.0, 0.5, 0.0, 0.2, 0.3];
        let c = top_candidates(&dist, 2);
        assert_eq!(c.iter().map(|x| x.0).collect::<Vec<_>>(), [4, 3]);
        let only_unk = [0.0, 1.0, 0.0, 0.0];
        assert_eq!(top_candidates(&only_unk, 2)[0].0, UNK);
    }

    #[test]
    fn ties_prefer_lower_ids() {
        let dist = [0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25];
        let c = top_candidates(&dist, 2);
        assert_eq!(c.iter().map(|x| x.0).collect::<Vec<_>>(), [3, 4]);
    }
}
