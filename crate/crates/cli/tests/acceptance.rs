//! End-to-end acceptance checks. Each check prints one `[PASS]` or `[FAIL]`
//! line; the process exits non-zero when any check fails.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use highlights_core::corpus::{
    build_vocabulary, compose_input, decode_extended, encode_document, encode_example, kfold_partitions, load_dataset,
    preprocess, split, split_sizes, CorpusError, Document, ExampleEncoding, InputType, SplitRatios, Vocabulary,
    MAX_TARGET_TOKENS, STOP,
};
use highlights_core::embedding::{LiveProvider, SyntheticEncoder};
use highlights_core::energy::{
    carbon_footprint, memory_power, EnergyParams, DEFAULT_CARBON_INTENSITY, DEFAULT_PUE,
};
use highlights_core::metrics::{
    bertscore, evaluate_pair, meteor, rouge_l, rouge_n, BertScoreNormalization, MetricReport, Prf,
};
use highlights_core::model::{
    decode_beam, decode_greedy, extended_distribution, step_loss, train, ModelConfig, Params, TrainingExample,
    PROB_FLOOR,
};
use highlights_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy")
}

fn small_vocab(n: usize) -> Vocabulary {
    Vocabulary::from_tokens((0..n).map(|i| format!("w{i}")))
}

fn model_config(h: usize, e: usize) -> ModelConfig {
    ModelConfig {
        hidden_size: h,
        emb_dim: e,
        ..ModelConfig::default()
    }
}

fn perturb(p: &mut Params<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    for (_, t) in p.tensors_mut() {
        for x in &mut t.data {
            *x += rng.gen_range(-scale..scale);
        }
    }
}

fn random_example(rng: &mut ChaCha8Rng, vocab: &Vocabulary, n_words: usize) -> ExampleEncoding {
    let word = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.25) {
            format!("oov{}", rng.gen_range(0..4))
        } else {
            format!("w{}", rng.gen_range(0..n_words))
        }
    };
    let src: Vec<String> = (0..rng.gen_range(1..12)).map(|_| word(rng)).collect();
    let tgt: Vec<String> = (0..rng.gen_range(0..8)).map(|_| word(rng)).collect();
    encode_example(&src, &tgt, vocab, InputType::AbstractOnly).unwrap()
}

// Analytic gradients of the full loss against central differences.
const FD_STEP: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-6;
const FD_TOLERANCE: f64 = 1e-4;
const FD_SEEDS: u64 = 5;
const FD_BUDGET: Duration = Duration::from_secs(60);

fn gradients() -> Result<String> {
    let start = Instant::now();
    let vocab = small_vocab(16);
    ensure!(vocab.len() == 20, "micro vocabulary has {} entries", vocab.len());
    let ex = encode_example(&toks("w1 oova w3 w1 oovb"), &toks("w3 oova zzz"), &vocab, InputType::AbstractOnly)?;
    ensure!((ex.source_len(), ex.target_len()) == (5, 4));
    let cfg = ModelConfig {
        vocab_size: 16,
        ..model_config(8, 6)
    };
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for seed in 0..FD_SEEDS {
        let mut p = Params::<f64>::init(&cfg, vocab.len(), None, seed)?;
        perturb(&mut p, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xfeed), 0.3);
        let fwd = p.forward_sequence(&ex, None, 1.0, true)?;
        ensure!(fwd.clamped_steps() == 0);
        let mut grads = p.zeros_like();
        p.backward(&ex, &fwd, 1.0, 1.0, &mut grads);
        let analytic: Vec<(String, Vec<f64>)> =
            grads.tensors().into_iter().map(|(n, t)| (n.to_string(), t.data.clone())).collect();
        let mut probe = p.clone();
        for (ti, (name, a)) in analytic.iter().enumerate() {
            if !Params::<f64>::is_trainable(name) {
                continue;
            }
            for (k, &ak) in a.iter().enumerate() {
                let orig = probe.tensors()[ti].1.data[k];
                probe.tensors_mut()[ti].1.data[k] = orig + FD_STEP;
                let up = probe.sequence_loss(&ex, None, 1.0)?;
                probe.tensors_mut()[ti].1.data[k] = orig - FD_STEP;
                let down = probe.sequence_loss(&ex, None, 1.0)?;
                probe.tensors_mut()[ti].1.data[k] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let rel = (ak - numeric).abs() / ak.abs().max(numeric.abs()).max(FD_FLOOR);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(worst < FD_TOLERANCE, "worst relative error {worst:.3e} >= {FD_TOLERANCE:e}");
    ensure!(elapsed < FD_BUDGET, "took {elapsed:?}");
    Ok(format!(
        "{checked} entries over {FD_SEEDS} seeds, worst relative error {worst:.2e} < {FD_TOLERANCE:e}"
    ))
}

const NORM_DRAWS: u64 = 100;
const NORM_TOLERANCE: f64 = 1e-6;

fn normalization() -> Result<String> {
    let vocab = small_vocab(12);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut attn_err, mut dist_err) = (0.0f64, 0.0f64);
    let (mut pgen_lo, mut pgen_hi) = (1.0f64, 0.0f64);
    let mut steps = 0usize;
    for draw in 0..NORM_DRAWS {
        let cfg = model_config(rng.gen_range(2..10), rng.gen_range(2..8));
        let mut p = Params::<f64>::init(&cfg, vocab.len(), None, draw)?;
        perturb(&mut p, &mut rng, 0.5);
        let ex = random_example(&mut rng, &vocab, 12);
        for teacher in [true, false] {
            let fwd = p.forward_sequence(&ex, None, 1.0, teacher)?;
            for (s, o) in fwd.steps.iter().zip(&fwd.outputs) {
                attn_err = attn_err.max((s.attention.iter().sum::<f64>() - 1.0).abs());
                dist_err = dist_err.max((o.extended_dist.iter().sum::<f64>() - 1.0).abs());
                pgen_lo = pgen_lo.min(o.p_gen);
                pgen_hi = pgen_hi.max(o.p_gen);
                steps += 1;
            }
        }
    }
    ensure!(attn_err <= NORM_TOLERANCE, "attention off by {attn_err:e}");
    ensure!(dist_err <= NORM_TOLERANCE, "extended distribution off by {dist_err:e}");
    ensure!(pgen_lo > 0.0 && pgen_hi < 1.0, "p_gen reached [{pgen_lo}, {pgen_hi}]");
    Ok(format!(
        "{steps} steps over {NORM_DRAWS} draws: |Σa-1| <= {attn_err:.1e}, |ΣP-1| <= {dist_err:.1e}, p_gen in [{pgen_lo:.3}, {pgen_hi:.3}]"
    ))
}

const COVERAGE_SUM_TOLERANCE: f64 = 1e-5;
/// Rounding slack on the `[0, min(1, t)]` bound of the per-step coverage loss.
const COVERAGE_BOUND_SLACK: f64 = 1e-12;

fn coverage() -> Result<String> {
    let vocab = small_vocab(12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut steps = 0usize;
    for draw in 0..NORM_DRAWS {
        let cfg = model_config(rng.gen_range(2..10), rng.gen_range(2..8));
        let mut p = Params::<f64>::init(&cfg, vocab.len(), None, draw)?;
        perturb(&mut p, &mut rng, 0.5);
        let ex = random_example(&mut rng, &vocab, 12);
        let lambda = rng.gen_range(0.1..2.0);
        let fwd = p.forward_sequence(&ex, None, lambda, true)?;
        let mut running = vec![0.0f64; ex.source_len()];
        for (t, (s, o)) in fwd.steps.iter().zip(&fwd.outputs).enumerate() {
            ensure!(s.coverage == running, "draw {draw} step {t}: coverage is not the running attention sum");
            let total: f64 = s.coverage.iter().sum();
            ensure!((total - t as f64).abs() <= COVERAGE_SUM_TOLERANCE, "Σc = {total} at t = {t}");
            let bound = (t as f64).min(1.0) + COVERAGE_BOUND_SLACK;
            ensure!(o.cov_loss >= 0.0 && o.cov_loss <= bound, "cov_loss {} at t = {t}", o.cov_loss);
            for (c, a) in running.iter_mut().zip(&s.attention) {
                *c += a;
            }
            steps += 1;
        }
        // With λ = 0 the loss is the plain mean negative log-likelihood.
        let plain = p.forward_sequence(&ex, None, 0.0, true)?;
        let mut nll = 0.0f64;
        for (t, o) in plain.outputs.iter().enumerate() {
            nll += -o.extended_dist[ex.target_ext_ids[t]].max(PROB_FLOOR).ln();
            let sl = step_loss(&o.extended_dist, ex.target_ext_ids[t], &plain.steps[t].attention, &plain.steps[t].coverage, 0.0);
            ensure!(sl.total.to_bits() == sl.nll.to_bits());
        }
        let nll = nll / ex.target_len() as f64;
        ensure!(plain.loss.to_bits() == nll.to_bits(), "λ = 0 loss {} vs nll {nll}", plain.loss);
    }
    Ok(format!(
        "{steps} steps: c_0 = 0, c_t = Σa exactly, |Σc - t| <= {COVERAGE_SUM_TOLERANCE:e}, cov_loss in [0, min(1,t)], λ=0 bit-exact"
    ))
}

const WORKED_TOLERANCE: f64 = 1e-12;

fn copy_mechanism() -> Result<String> {
    // Fixed vocabulary {a, b, c, d} after the four specials; source "foo a" with foo OOV.
    let mut p_vocab = vec![0.0f64; 8];
    p_vocab[4..].fill(0.25);
    let dist = extended_distribution(&p_vocab, &[0.6, 0.4], 0.5, &[8, 4], 9);
    ensure!((dist[8] - 0.30).abs() < WORKED_TOLERANCE, "P(foo) = {}", dist[8]);
    ensure!((dist[4] - 0.325).abs() < WORKED_TOLERANCE, "P(a) = {}", dist[4]);

    let vocab = small_vocab(12);
    let cfg = model_config(6, 4);

    // Pure copying with uniform attention over a source dominated by one OOV word.
    let mut p = Params::<f64>::init(&cfg, vocab.len(), None, 4)?;
    p.ptr.b.data[0] = -1e4;
    p.attn.w_h.fill(0.0);
    p.attn.w_s.fill(0.0);
    p.attn.b.fill(0.0);
    let ex = encode_example(&toks("novel w1 novel w2 novel"), &[], &vocab, InputType::AbstractOnly)?;
    let out = decode_beam(&p, &ex, None, &vocab, 4, 10)?;
    ensure!(out.tokens.first().map(String::as_str) == Some("novel"), "emitted {:?}", out.tokens);

    // A source made of a single OOV word can only be copied.
    let ex = encode_example(&toks("quux quux quux"), &[], &vocab, InputType::AbstractOnly)?;
    let out = decode_beam(&p, &ex, None, &vocab, 4, 10)?;
    ensure!(!out.tokens.is_empty() && out.tokens.iter().all(|t| t == "quux"), "emitted {:?}", out.tokens);

    // With p_gen = 0 the first emitted token carries the most attention mass.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20 {
        let mut p = Params::<f64>::init(&cfg, vocab.len(), None, seed)?;
        perturb(&mut p, &mut rng, 0.5);
        p.ptr.b.data[0] = -1e4;
        let ex = random_example(&mut rng, &vocab, 12);
        let fwd = p.forward_sequence(&ex, None, 0.0, false)?;
        let Some(first) = fwd.outputs.first() else { continue };
        ensure!(first.p_gen == 0.0);
        let mut mass = vec![0.0f64; ex.extended_len()];
        for (&id, &a) in ex.source_ext_ids.iter().zip(&fwd.steps[0].attention) {
            mass[id] += a;
        }
        let top = (0..mass.len()).fold(0, |b, i| if mass[i] > mass[b] { i } else { b });
        let out = decode_beam(&p, &ex, None, &vocab, 1, 5)?;
        let expect = decode_extended(&[top], &vocab, &ex.oov_tokens);
        ensure!(out.tokens.first() == expect.first(), "seed {seed}: emitted {:?}, expected {expect:?}", out.tokens);
    }
    Ok("worked example P(foo)=0.30, P(a)=0.325 to 1e-12; OOV copied under p_gen = 0".into())
}

const OVERFIT_SEED: u64 = 1;
const OVERFIT_ROUGE1: f64 = 0.90;
const OVERFIT_BUDGET: Duration = Duration::from_secs(600);

fn repeated_bigrams(tokens: &[String]) -> usize {
    (0..tokens.len().saturating_sub(3))
        .filter(|&i| tokens[i..i + 2] == tokens[i + 2..i + 4])
        .count()
}

fn overfit() -> Result<String> {
    let start = Instant::now();
    let docs = load_dataset(data_dir().join("overfit.jsonl"), true)?.documents;
    ensure!(docs.len() == 8, "overfit corpus has {} documents", docs.len());
    let it = InputType::AbstractOnly;
    let mut seqs = Vec::new();
    for d in &docs {
        seqs.push(compose_input(d, it)?);
        seqs.push(preprocess(&d.highlights));
    }
    let vocab = build_vocabulary(&seqs, 50_000)?;
    let examples = docs
        .iter()
        .map(|d| {
            Ok(TrainingExample {
                id: d.id.clone(),
                encoding: encode_document(d, it, &vocab)?,
                source_rows: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = ModelConfig {
        phase1_iters: 500,
        phase2_iters: 100,
        ..model_config(64, 64)
    };
    let init = Params::init(&cfg, vocab.len(), None, OVERFIT_SEED)?;
    let outcome = train(init, &cfg, &examples, &[], OVERFIT_SEED, &mut ())?;

    let (mut f1, mut rep1, mut rep2) = (0.0, 0usize, 0usize);
    for (ex, d) in examples.iter().zip(&docs) {
        let reference = preprocess(&d.highlights);
        let out = decode_greedy(&outcome.params, &ex.encoding, None, &vocab, MAX_TARGET_TOKENS)?;
        f1 += rouge_n(&out.tokens, &reference, 1).f1;
        rep2 += repeated_bigrams(&out.tokens);
        let before = decode_greedy(&outcome.phase1, &ex.encoding, None, &vocab, MAX_TARGET_TOKENS)?;
        rep1 += repeated_bigrams(&before.tokens);
    }
    let f1 = f1 / examples.len() as f64;
    let elapsed = start.elapsed();
    ensure!(f1 >= OVERFIT_ROUGE1, "training-set ROUGE-1 F1 {f1:.4} < {OVERFIT_ROUGE1}");
    ensure!(elapsed < OVERFIT_BUDGET, "took {elapsed:?}");
    ensure!(rep2 <= rep1, "repeated bigrams rose from {rep1} to {rep2} after the coverage phase");
    Ok(format!(
        "ROUGE-1 F1 {f1:.4} >= {OVERFIT_ROUGE1}; repeated bigrams {rep1} -> {rep2}"
    ))
}

/// Every sequence over `{0, 1, 2}` of length at most `max_len`, shortest first.
fn all_sequences(max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        let next: Vec<Vec<u8>> = layer
            .iter()
            .flat_map(|s: &Vec<u8>| {
                (0..3u8).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Base-3 index of a sequence among those of its length.
fn index_of(s: &[u8]) -> usize {
    s.iter().fold(0, |acc, &c| acc * 3 + c as usize)
}

/// Brute-force summaries of one sequence: n-gram counts and, for each length
/// k, the set of its length-k subsequences as a bitset over base-3 indices.
struct Profile {
    len: usize,
    unigrams: [u32; 3],
    bigrams: [u32; 9],
    subseqs: Vec<Vec<u64>>,
}

fn profile(s: &[u8]) -> Profile {
    let mut unigrams = [0; 3];
    for &c in s {
        unigrams[c as usize] += 1;
    }
    let mut bigrams = [0; 9];
    for w in s.windows(2) {
        bigrams[w[0] as usize * 3 + w[1] as usize] += 1;
    }
    let mut subseqs: Vec<Vec<u64>> = (0..=s.len()).map(|k| vec![0u64; 3usize.pow(k as u32).div_ceil(64)]).collect();
    for mask in 0u32..(1 << s.len()) {
        let sub: Vec<u8> = (0..s.len()).filter(|&i| mask & (1 << i) != 0).map(|i| s[i]).collect();
        let idx = index_of(&sub);
        subseqs[sub.len()][idx / 64] |= 1 << (idx % 64);
    }
    Profile {
        len: s.len(),
        unigrams,
        bigrams,
        subseqs,
    }
}

fn oracle_prf(overlap: u32, cand_total: usize, ref_total: usize) -> (f64, f64, f64) {
    let r = if ref_total == 0 { 0.0 } else { overlap as f64 / ref_total as f64 };
    let p = if cand_total == 0 { 0.0 } else { overlap as f64 / cand_total as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (r, p, f)
}

fn same(prf: Prf, oracle: (f64, f64, f64)) -> bool {
    (prf.recall, prf.precision, prf.f1) == oracle
}

const MAX_ORACLE_LEN: usize = 8;
const METEOR_TOLERANCE: f64 = 1e-4;
const BERTSCORE_TOLERANCE: f64 = 1e-9;

fn metrics() -> Result<String> {
    let seqs = all_sequences(MAX_ORACLE_LEN);
    let profiles: Vec<Profile> = seqs.iter().map(|s| profile(s)).collect();
    let mut pairs = 0u64;
    for (c, pc) in seqs.iter().zip(&profiles) {
        for (r, pr) in seqs.iter().zip(&profiles) {
            let uni: u32 = (0..3).map(|g| pc.unigrams[g].min(pr.unigrams[g])).sum();
            let bi: u32 = (0..9).map(|g| pc.bigrams[g].min(pr.bigrams[g])).sum();
            let lcs = (1..=pc.len.min(pr.len))
                .take_while(|&k| pc.subseqs[k].iter().zip(&pr.subseqs[k]).any(|(a, b)| a & b != 0))
                .last()
                .unwrap_or(0);
            let ok = same(rouge_n(c, r, 1), oracle_prf(uni, pc.len, pr.len))
                && same(rouge_n(c, r, 2), oracle_prf(bi, pc.len.saturating_sub(1), pr.len.saturating_sub(1)))
                && same(rouge_l(c, r), oracle_prf(lcs as u32, pc.len, pr.len));
            ensure!(ok, "ROUGE disagrees with the oracle for candidate {c:?}, reference {r:?}");
            pairs += 1;
        }
    }

    let m = meteor(&toks("a b c"), &toks("a b c"));
    ensure!((m - 0.98148).abs() < METEOR_TOLERANCE, "identity METEOR {m}");
    let m2 = meteor(&toks("the cat sat on mat"), &toks("the cat sat on the mat"));
    ensure!((m2 - 0.8204).abs() < METEOR_TOLERANCE, "two-chunk METEOR {m2}");
    ensure!(meteor(&toks("x y"), &toks("a b")) == 0.0);

    let norm = BertScoreNormalization::Standard;
    let e = Tensor::from_vec(&[2, 2], vec![1.0f64, 0.0, 0.0, 1.0]);
    let b = bertscore(&e, &e, norm)?;
    ensure!([b.recall, b.precision, b.f1].iter().all(|v| (v - 1.0).abs() < BERTSCORE_TOLERANCE), "{b:?}");
    let x = Tensor::from_vec(&[1, 3], vec![1.0f64, 0.0, 0.0]);
    let y = Tensor::from_vec(&[2, 3], vec![0.0f64, 1.0, 0.0, 0.0, 0.0, 2.0]);
    let b = bertscore(&x, &y, norm)?;
    ensure!([b.recall, b.precision, b.f1].iter().all(|v| v.abs() < BERTSCORE_TOLERANCE), "{b:?}");
    let cand = Tensor::from_vec(&[1, 2], vec![1.0f64, 0.0]);
    let b = bertscore(&cand, &e, norm)?;
    ensure!((b.recall - 0.5).abs() < BERTSCORE_TOLERANCE, "{b:?}");
    ensure!((b.precision - 1.0).abs() < BERTSCORE_TOLERANCE, "{b:?}");
    ensure!((b.f1 - 2.0 / 3.0).abs() < BERTSCORE_TOLERANCE, "{b:?}");

    let provider = LiveProvider::new(Box::new(SyntheticEncoder::new(32, 0)));
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let words = ["model", "data", "the", "graph", "energy", "cells", "of", "improves"];
    for _ in 0..200 {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
            (0..rng.gen_range(0..10)).map(|_| words[rng.gen_range(0..words.len())].to_string()).collect()
        };
        let (c, r) = (draw(&mut rng), draw(&mut rng));
        let rep = evaluate_pair(&c, &r, &provider, norm)?;
        let in_range = |v: f64| (0.0..=1.0).contains(&v);
        let prfs = [rep.rouge1, rep.rouge2, rep.rouge_l, rep.bertscore];
        for v in prfs.iter().flat_map(|p| [p.recall, p.precision, p.f1]).chain([rep.meteor]) {
            ensure!(in_range(v), "metric value {v} outside [0, 1] for {c:?} / {r:?}");
        }
    }
    Ok(format!(
        "ROUGE-1/2/L exact on all {pairs} pairs up to length {MAX_ORACLE_LEN}; METEOR {m:.5}, {m2:.4}; BERTScore cases to 1e-9"
    ))
}

const ROUND_TRIP_DOCS: usize = 1000;

fn words(rng: &mut ChaCha8Rng, len: std::ops::Range<usize>) -> Vec<String> {
    let n = rng.gen_range(len);
    (0..n).map(|_| format!("t{}", rng.gen_range(0..40))).collect()
}

fn truncation() -> Result<String> {
    let caps: Vec<usize> = InputType::ALL.iter().map(|it| it.source_cap()).collect();
    ensure!(caps == [400, 800, 1200, 1500, 1500], "caps {caps:?}");
    ensure!(MAX_TARGET_TOKENS == 100);

    let vocab = Vocabulary::from_tokens((0..20).map(|i| format!("t{i}")));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut encoded, mut missing, mut capped) = (0usize, 0usize, 0usize);
    for i in 0..ROUND_TRIP_DOCS {
        let abs = words(&mut rng, 1..600);
        let intro = rng.gen_bool(0.8).then(|| words(&mut rng, 1..1400));
        let concl = rng.gen_bool(0.8).then(|| words(&mut rng, 1..1000));
        let hl = words(&mut rng, 1..160);
        let it = InputType::ALL[rng.gen_range(0..InputType::ALL.len())];
        let doc = Document {
            id: format!("doc-{i}"),
            abstract_text: abs.join(" "),
            introduction: intro.as_ref().map(|w| w.join(" ")),
            conclusion: concl.as_ref().map(|w| w.join(" ")),
            highlights: hl.join(" "),
            subject: None,
        };
        let full: Option<Vec<String>> = match it {
            InputType::AbstractOnly => Some(abs.clone()),
            InputType::ConclusionOnly => concl.clone(),
            InputType::IntroductionOnly => intro.clone(),
            InputType::AbstractPlusConclusion => concl.as_ref().map(|c| [abs.clone(), c.clone()].concat()),
            InputType::IntroductionPlusConclusion => match (&intro, &concl) {
                (Some(a), Some(b)) => Some([a.clone(), b.clone()].concat()),
                _ => None,
            },
        };
        match (encode_document(&doc, it, &vocab), full) {
            (Err(CorpusError::MissingSection { .. }), None) => {
                missing += 1;
                continue;
            }
            (Ok(ex), Some(full)) => {
                let expect = &full[..full.len().min(it.source_cap())];
                ensure!(ex.source_len() == expect.len(), "{}: source length {}", doc.id, ex.source_len());
                ensure!(decode_extended(&ex.source_ext_ids, &vocab, &ex.oov_tokens) == expect, "{}: source round trip", doc.id);
                capped += usize::from(full.len() > it.source_cap());
                let kept = &hl[..hl.len().min(MAX_TARGET_TOKENS)];
                ensure!(ex.target_len() == kept.len() + 1 && ex.target_ext_ids.last() == Some(&STOP));
                let back = decode_extended(&ex.target_ext_ids[..kept.len()], &vocab, &ex.oov_tokens);
                for (w, b) in kept.iter().zip(&back) {
                    let recoverable = vocab.contains(w) || ex.oov_tokens.contains(w);
                    ensure!((recoverable && b == w) || (!recoverable && b == "<unk>"), "{}: target {w} -> {b}", doc.id);
                }
                encoded += 1;
            }
            (r, f) => bail!("{}: encode {:?} but sections present = {}", doc.id, r.err(), f.is_some()),
        }
    }
    ensure!(capped > 0);
    Ok(format!(
        "caps 400/800/1200/1500/1500 + 100; {encoded} documents round-trip losslessly ({capped} truncated, {missing} lacking a section)"
    ))
}

const CARBON_TOLERANCE: f64 = 1e-9;

fn energy() -> Result<String> {
    let p = EnergyParams {
        hours: 1.0,
        cores: 1.0,
        core_watts: 100.0,
        core_usage: 1.0,
        ..EnergyParams::default()
    };
    let g = carbon_footprint(&p)?.grams_co2e;
    ensure!((g - 52.25).abs() < CARBON_TOLERANCE, "derived case gives {g} g");
    let mem = memory_power(8.0)?;
    ensure!((mem - 2.98).abs() < 1e-12, "memory_power(8) = {mem}");
    ensure!(DEFAULT_PUE == 1.10 && DEFAULT_CARBON_INTENSITY == 475.0);
    ensure!(EnergyParams::default().pue == 1.10 && EnergyParams::default().carbon_intensity == 475.0);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let p = EnergyParams {
            hours: rng.gen_range(0.0..100.0),
            cores: rng.gen_range(0.0..64.0),
            core_watts: rng.gen_range(0.0..300.0),
            core_usage: rng.gen_range(0.0..=1.0),
            gpus: rng.gen_range(0.0..8.0),
            gpu_watts: rng.gen_range(0.0..400.0),
            gpu_usage: rng.gen_range(0.0..=1.0),
            mem_gb: rng.gen_range(0.0..512.0),
            pue: rng.gen_range(1.0..2.0),
            carbon_intensity: rng.gen_range(0.0..1000.0),
        };
        let base = carbon_footprint(&p)?.grams_co2e;
        let k = rng.gen_range(0.0..10.0);
        let scaled = carbon_footprint(&EnergyParams { hours: k * p.hours, ..p.clone() })?.grams_co2e;
        ensure!((scaled - k * base).abs() <= 1e-9 * (1.0 + k * base), "not linear in time");
        let more = |q: EnergyParams| carbon_footprint(&q).map(|r| r.grams_co2e >= base);
        ensure!(more(EnergyParams { cores: p.cores + 1.0, ..p.clone() })?);
        ensure!(more(EnergyParams { gpu_watts: p.gpu_watts + 10.0, ..p.clone() })?);
        ensure!(more(EnergyParams { mem_gb: p.mem_gb + 1.0, ..p.clone() })?);
        ensure!(more(EnergyParams { pue: p.pue + 0.1, ..p.clone() })?);
        ensure!(more(EnergyParams { carbon_intensity: p.carbon_intensity + 1.0, ..p.clone() })?);
    }
    Ok(format!("52.25 g derived case, memory_power(8) = {mem} W, linear and monotone over 1000 draws"))
}

const CORPUS_SIZE: usize = 10_142;
const EXPECTED_SPLIT: [usize; 3] = [8115, 1014, 1013];

fn splits() -> Result<String> {
    let ids: Vec<usize> = (0..CORPUS_SIZE).collect();
    let ratios = SplitRatios::default();
    let s = split(&ids, ratios, 11)?;
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    ensure!(all == ids, "split is not a partition");
    let again = split(&ids, ratios, 11)?;
    ensure!(again.train == s.train && again.val == s.val && again.test == s.test, "not reproducible");
    ensure!(split(&ids, ratios, 12)?.train != s.train, "seed has no effect");
    ensure!(split_sizes(10, ratios)? == [8, 1, 1]);

    let folds = kfold_partitions(&ids, 5, 11)?;
    let mut seen = HashSet::new();
    for (train, test) in &folds {
        ensure!(matches!(test.len(), 2028 | 2029), "fold of {}", test.len());
        ensure!(train.len() + test.len() == CORPUS_SIZE);
        let t: HashSet<_> = test.iter().collect();
        ensure!(train.iter().all(|x| !t.contains(x)));
        for x in test {
            ensure!(seen.insert(*x), "document {x} appears in two folds");
        }
    }
    ensure!(seen.len() == CORPUS_SIZE, "folds miss documents");
    ensure!(kfold_partitions(&ids, 5, 11)? == folds);

    let sizes = [s.train.len(), s.val.len(), s.test.len()];
    ensure!(
        sizes == EXPECTED_SPLIT,
        "partition, 5-fold and reproducibility hold, but {CORPUS_SIZE} documents split {sizes:?}, expected {EXPECTED_SPLIT:?}"
    );
    Ok(format!("{CORPUS_SIZE} -> {sizes:?}; 5 folds disjoint and exhaustive; reproducible"))
}

fn highlights(args: &[&str]) -> Result<String> {
    let out = Command::new(env!("CARGO_BIN_EXE_highlights")).args(args).output()?;
    ensure!(
        out.status.success(),
        "`highlights {}` failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(String::from_utf8(out.stdout)?)
}

fn end_to_end() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let out = dir.path().to_str().context("temp path")?;
    let config = data_dir().join("toy.toml");
    let config = config.to_str().context("config path")?;
    let common = ["--config", config, "--out", out];
    let stats = highlights(&[&["stats"], &common[..]].concat())?;
    ensure!(stats.contains("corpus") && stats.contains("Average Words (source)"), "stats table:\n{stats}");
    highlights(&[&["train"], &common[..], &["--phase1-iters", "40", "--phase2-iters", "10", "--checkpoint-every", "20"]].concat())?;
    highlights(&[&["generate"], &common[..]].concat())?;
    let table = highlights(&[&["evaluate"], &common[..]].concat())?;

    let report = std::fs::read_to_string(dir.path().join("report.txt"))?;
    let header = MetricReport::HEADER.lines().next().context("header")?;
    ensure!(report.contains(header), "report lacks the metric header:\n{report}");
    let rows: Vec<&str> = table.lines().skip(2).collect();
    ensure!(rows.len() == 1 && rows[0].starts_with("test"), "report rows:\n{table}");
    let generated = std::fs::read_to_string(dir.path().join("generated.tsv"))?;
    let lines: Vec<&str> = generated.lines().filter(|l| !l.starts_with('#')).collect();
    ensure!(lines.len() == 4, "{} generated lines", lines.len());
    for l in &lines {
        ensure!(l.split('\t').nth(2).map_or(0, |t| t.split_whitespace().count()) <= MAX_TARGET_TOKENS);
    }
    Ok(format!("stats -> train -> generate -> evaluate on the toy corpus; {}", rows[0].split_whitespace().take(3).collect::<Vec<_>>().join(" ")))
}

fn main() {
    let checks: [(&str, fn() -> Result<String>); 10] = [
        ("gradient correctness", gradients),
        ("normalization", normalization),
        ("coverage identities", coverage),
        ("copy mechanism", copy_mechanism),
        ("overfit", overfit),
        ("metric oracles", metrics),
        ("truncation and encoding", truncation),
        ("energy", energy),
        ("splits", splits),
        ("end to end", end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(anyhow::anyhow!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail} ({secs:.1}s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {e:#} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("{} of {} acceptance checks passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
