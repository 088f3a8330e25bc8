use std::collections::HashMap;

use crate::corpus::{Vocabulary, PAD, START, STOP, UNK};
use crate::tensor::{Scalar, Tensor};

use super::cache::{EmbeddingCache, RecordKey};
use super::{EmbeddingError, Result};

/// Default width of a learned embedding table.
pub const LEARNED_DIM: usize = 128;
/// Width of the pre-trained contextual encoder's vectors.
pub const CONTEXTUAL_DIM: usize = 768;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    Learned,
    ContextualCache,
    ContextualLive,
}

/// The embedding function applied to encoder and decoder tokens.
pub trait EmbeddingProvider {
    fn kind(&self) -> ProviderKind;
    fn dim(&self) -> usize;
    fn trainable(&self) -> bool;

    /// `[tokens × dim]`. Learned rows depend only on the token; contextual rows
    /// may depend on the whole sequence. `key` names the cached record for
    /// cache-backed providers and is ignored by the others.
    fn embed_sequence(&self, tokens: &[String], key: Option<&RecordKey>) -> Result<Tensor<f32>>;

    /// Context-free vector for a single token. Out-of-vocabulary tokens get the
    /// UNK vector.
    fn embed_token(&self, token: &str) -> Vec<f32>;

    /// One [`embed_token`](Self::embed_token) row per vocabulary entry.
    fn static_table(&self, vocab: &Vocabulary) -> Tensor<f32> {
        let mut data = Vec::with_capacity(vocab.len() * self.dim());
        for t in vocab.tokens() {
            data.extend(self.embed_token(t));
        }
        Tensor::from_vec(&[vocab.len(), self.dim()], data)
    }
}

/// View over a trainable `[vocab × dim]` table.
pub struct LearnedProvider<'a, T> {
    vocab: &'a Vocabulary,
    table: &'a Tensor<T>,
}

impl<'a, T: Scalar> LearnedProvider<'a, T> {
    pub fn new(vocab: &'a Vocabulary, table: &'a Tensor<T>) -> Result<Self> {
        if table.rows() != vocab.len() {
            return Err(EmbeddingError::DimMismatch {
                expected: vocab.len(),
                found: table.rows(),
            });
        }
        Ok(Self { vocab, table })
    }

    fn row(&self, token: &str) -> Vec<f32> {
        self.table
            .row(self.vocab.id_or_unk(token))
            .iter()
            .map(|x| x.to_f64_lossy() as f32)
            .collect()
    }
}

impl<T: Scalar> EmbeddingProvider for LearnedProvider<'_, T> {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Learned
    }

    fn dim(&self) -> usize {
        self.table.cols()
    }

    fn trainable(&self) -> bool {
        true
    }

    fn embed_sequence(&self, tokens: &[String], _key: Option<&RecordKey>) -> Result<Tensor<f32>> {
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptySequence);
        }
        let data = tokens.iter().flat_map(|t| self.row(t)).collect();
        Ok(Tensor::from_vec(&[tokens.len(), self.dim()], data))
    }

    fn embed_token(&self, token: &str) -> Vec<f32> {
        self.row(token)
    }
}

/// Contextual vectors read from a precomputed cache.
///
/// The per-token static vectors used on the decoder side are the mean of each
/// token's cached contextual vectors over the sequences given at construction.
/// UNK is the mean over every cached token; the remaining specials are zero.
pub struct CacheProvider {
    cache: EmbeddingCache,
    static_vectors: HashMap<String, Vec<f32>>,
    unk: Vec<f32>,
    vocab: Option<Vocabulary>,
}

impl CacheProvider {
    /// `sequences` pairs each cache key with the composed tokens it was built
    /// from; they feed the static per-token table.
    pub fn new<I>(cache: EmbeddingCache, sequences: I) -> Result<Self>
    where
        I: IntoIterator<Item = (RecordKey, Vec<String>)>,
    {
        let dim = cache.dim;
        let mut sums: HashMap<String, (Vec<f64>, usize)> = HashMap::new();
        let mut total = vec![0f64; dim];
        let mut count = 0usize;
        for (key, tokens) in sequences {
            let rec = cache.get(&key).ok_or_else(|| miss(&key))?;
            check_len(&key, rec.tokens.rows(), tokens.len())?;
            for (t, tok) in tokens.iter().enumerate() {
                let row = rec.tokens.row(t);
                let entry = sums.entry(tok.clone()).or_insert_with(|| (vec![0.0; dim], 0));
                for ((s, g), &x) in entry.0.iter_mut().zip(total.iter_mut()).zip(row) {
                    *s += x as f64;
                    *g += x as f64;
                }
                entry.1 += 1;
                count += 1;
            }
        }
        let mean = |v: &[f64], n: usize| v.iter().map(|x| (x / n.max(1) as f64) as f32).collect::<Vec<_>>();
        let static_vectors = sums.into_iter().map(|(k, (v, n))| (k, mean(&v, n))).collect();
        Ok(Self {
            unk: mean(&total, count),
            cache,
            static_vectors,
            vocab: None,
        })
    }

    /// Restrict static lookups to `vocab`: tokens outside it map to UNK.
    pub fn with_vocabulary(mut self, vocab: Vocabulary) -> Self {
        self.vocab = Some(vocab);
        self
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

fn miss(key: &RecordKey) -> EmbeddingError {
    EmbeddingError::CacheMiss {
        id: key.doc_id.clone(),
        input_type: key.input_type.to_string(),
    }
}

fn check_len(key: &RecordKey, cached: usize, requested: usize) -> Result<()> {
    if cached != requested {
        return Err(EmbeddingError::LengthMismatch {
            id: key.doc_id.clone(),
            cached,
            requested,
        });
    }
    Ok(())
}

impl EmbeddingProvider for CacheProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::ContextualCache
    }

    fn dim(&self) -> usize {
        self.cache.dim
    }

    fn trainable(&self) -> bool {
        false
    }

    fn embed_sequence(&self, tokens: &[String], key: Option<&RecordKey>) -> Result<Tensor<f32>> {
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptySequence);
        }
        let key = key.ok_or_else(|| EmbeddingError::CacheMiss {
            id: "<unnamed sequence>".into(),
            input_type: "-".into(),
        })?;
        let rec = self.cache.get(key).ok_or_else(|| miss(key))?;
        check_len(key, rec.tokens.rows(), tokens.len())?;
        Ok(rec.tokens.clone())
    }

    fn embed_token(&self, token: &str) -> Vec<f32> {
        let in_vocab = self.vocab.as_ref().is_none_or(|v| v.contains(token));
        match (token, in_vocab) {
            (t, _) if is_zero_special(t) => vec![0.0; self.dim()],
            (t, true) => self.static_vectors.get(t).cloned().unwrap_or_else(|| self.unk.clone()),
            _ => self.unk.clone(),
        }
    }
}

fn is_zero_special(token: &str) -> bool {
    [PAD, START, STOP]
        .iter()
        .any(|&id| Vocabulary::special_token(id) == token)
}

/// A pre-trained contextual encoder operating on word tokens.
pub trait ContextualEncoder: Send + Sync {
    fn dim(&self) -> usize;

    /// `[tokens + 1 × dim]`; row 0 is the sentence-level vector, row `t + 1`
    /// belongs to `tokens[t]`.
    fn encode(&self, tokens: &[String]) -> Tensor<f32>;

    /// The encoder's context-free input vector for a word.
    fn static_embedding(&self, token: &str) -> Vec<f32>;
}

/// Encodes on demand with a wrapped [`ContextualEncoder`].
pub struct LiveProvider {
    encoder: Box<dyn ContextualEncoder>,
    vocab: Option<Vocabulary>,
}

impl LiveProvider {
    pub fn new(encoder: Box<dyn ContextualEncoder>) -> Self {
        Self { encoder, vocab: None }
    }

    pub fn with_vocabulary(mut self, vocab: Vocabulary) -> Self {
        self.vocab = Some(vocab);
        self
    }

    pub fn encoder(&self) -> &dyn ContextualEncoder {
        self.encoder.as_ref()
    }
}

impl EmbeddingProvider for LiveProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::ContextualLive
    }

    fn dim(&self) -> usize {
        self.encoder.dim()
    }

    fn trainable(&self) -> bool {
        false
    }

    fn embed_sequence(&self, tokens: &[String], _key: Option<&RecordKey>) -> Result<Tensor<f32>> {
        if tokens.is_empty() {
            return Err(EmbeddingError::EmptySequence);
        }
        let full = self.encoder.encode(tokens);
        let dim = self.dim();
        if full.cols() != dim || full.rows() != tokens.len() + 1 {
            return Err(EmbeddingError::DimMismatch {
                expected: dim,
                found: full.cols(),
            });
        }
        Ok(Tensor::from_vec(&[tokens.len(), dim], full.data[dim..].to_vec()))
    }

    fn embed_token(&self, token: &str) -> Vec<f32> {
        if is_zero_special(token) {
            return vec![0.0; self.dim()];
        }
        match &self.vocab {
            Some(v) if !v.contains(token) => self.encoder.static_embedding(Vocabulary::special_token(UNK)),
            _ => self.encoder.static_embedding(token),
        }
    }
}
