use serde::{Deserialize, Serialize};

use super::document::{Document, InputType};
use super::preprocess::preprocess;
use super::vocab::{Vocabulary, STOP, UNK};
use super::{CorpusError, Result};

/// Cap on highlight tokens, for training targets and generated output alike.
pub const MAX_TARGET_TOKENS: usize = 100;

/// Concatenate the preprocessed sections selected by `it` and keep the first
/// `it.source_cap()` tokens.
pub fn compose_input(doc: &Document, it: InputType) -> Result<Vec<String>> {
    let section = |text: Option<&String>, name: &'static str| -> Result<Vec<String>> {
        match text {
            Some(t) if !t.trim().is_empty() => Ok(preprocess(t)),
            _ => Err(CorpusError::MissingSection {
                id: doc.id.clone(),
                section: name,
            }),
        }
    };
    let abs = || section(Some(&doc.abstract_text), "abstract");
    let intro = || section(doc.introduction.as_ref(), "introduction");
    let concl = || section(doc.conclusion.as_ref(), "conclusion");

    let mut tokens = match it {
        InputType::AbstractOnly => abs()?,
        InputType::ConclusionOnly => concl()?,
        InputType::IntroductionOnly => intro()?,
        InputType::AbstractPlusConclusion => {
            let mut t = abs()?;
            t.extend(concl()?);
            t
        }
        InputType::IntroductionPlusConclusion => {
            let mut t = intro()?;
            t.extend(concl()?);
            t
        }
    };
    tokens.truncate(it.source_cap());
    Ok(tokens)
}

/// A source/target pair mapped onto the fixed vocabulary plus the
/// per-example extension that holds source OOV words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleEncoding {
    pub source_ids: Vec<usize>,
    /// Like `source_ids`, but OOV token `k` gets id `vocab.len() + k`.
    pub source_ext_ids: Vec<usize>,
    /// Target ids with [`STOP`] appended; OOV → [`UNK`].
    pub target_ids: Vec<usize>,
    /// Target ids where a word copied from the source keeps its extended id.
    pub target_ext_ids: Vec<usize>,
    pub oov_tokens: Vec<String>,
    pub input_type: InputType,
    pub vocab_len: usize,
}

impl ExampleEncoding {
    pub fn extended_len(&self) -> usize {
        self.vocab_len + self.oov_tokens.len()
    }

    pub fn source_len(&self) -> usize {
        self.source_ids.len()
    }

    /// Number of decoder steps, including the final STOP.
    pub fn target_len(&self) -> usize {
        self.target_ids.len()
    }
}

/// Encode one example. The source is capped by the input type; the target by
/// [`MAX_TARGET_TOKENS`] before STOP is appended.
pub fn encode_example(
    source: &[String],
    target: &[String],
    vocab: &Vocabulary,
    input_type: InputType,
) -> Result<ExampleEncoding> {
    if source.is_empty() {
        return Err(CorpusError::EmptySource);
    }
    let source = &source[..source.len().min(input_type.source_cap())];
    let target = &target[..target.len().min(MAX_TARGET_TOKENS)];
    let base = vocab.len();

    let mut oov_tokens: Vec<String> = Vec::new();
    let mut source_ids = Vec::with_capacity(source.len());
    let mut source_ext_ids = Vec::with_capacity(source.len());
    for tok in source {
        match vocab.id(tok) {
            Some(id) => {
                source_ids.push(id);
                source_ext_ids.push(id);
            }
            None => {
                let k = match oov_tokens.iter().position(|o| o == tok) {
                    Some(k) => k,
                    None => {
                        oov_tokens.push(tok.clone());
                        oov_tokens.len() - 1
                    }
                };
                source_ids.push(UNK);
                source_ext_ids.push(base + k);
            }
        }
    }

    let mut target_ids = Vec::with_capacity(target.len() + 1);
    let mut target_ext_ids = Vec::with_capacity(target.len() + 1);
    for tok in target {
        match vocab.id(tok) {
            Some(id) => {
                target_ids.push(id);
                target_ext_ids.push(id);
            }
            None => {
                target_ids.push(UNK);
                target_ext_ids.push(
                    oov_tokens
                        .iter()
                        .position(|o| o == tok)
                        .map_or(UNK, |k| base + k),
                );
            }
        }
    }
    target_ids.push(STOP);
    target_ext_ids.push(STOP);

    Ok(ExampleEncoding {
        source_ids,
        source_ext_ids,
        target_ids,
        target_ext_ids,
        oov_tokens,
        input_type,
        vocab_len: base,
    })
}

/// Compose, preprocess and encode a whole document.
pub fn encode_document(doc: &Document, it: InputType, vocab: &Vocabulary) -> Result<ExampleEncoding> {
    let source = compose_input(doc, it)?;
    let target = preprocess(&doc.highlights);
    encode_example(&source, &target, vocab, it)
}

/// Map extended ids back to strings through the vocabulary and OOV table.
pub fn decode_extended(ids: &[usize], vocab: &Vocabulary, oov_tokens: &[String]) -> Vec<String> {
    ids.iter()
        .map(|&id| match vocab.token(id) {
            Some(t) => t.to_string(),
            None => oov_tokens
                .get(id - vocab.len())
                .cloned()
                .unwrap_or_else(|| Vocabulary::special_token(UNK).to_string()),
        })
        .collect()
}
