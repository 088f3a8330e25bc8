use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;

const SPECIAL_TOKENS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Frequency-ranked token ↔ id map. Ids `0..4` are the special tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const NUM_SPECIALS: usize = SPECIAL_TOKENS.len();

    /// Build from an ordered list of non-special tokens.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        for t in tokens {
            let t = t.into();
            if !SPECIAL_TOKENS.contains(&t.as_str()) && !all.contains(&t) {
                all.push(t);
            }
        }
        Self::from_full(all)
    }

    fn from_full(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == Self::NUM_SPECIALS
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or [`UNK`] when it is out of vocabulary.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// All tokens including specials, in id order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn special_token(id: usize) -> &'static str {
        SPECIAL_TOKENS[id]
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        // Serialized form always includes the specials at the front.
        if tokens.len() >= Self::NUM_SPECIALS
            && tokens[..Self::NUM_SPECIALS]
                .iter()
                .zip(SPECIAL_TOKENS)
                .all(|(a, b)| a == b)
        {
            Self::from_full(tokens)
        } else {
            Self::from_tokens(tokens)
        }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

/// Keep the `max_size` most frequent tokens; ties go to the token seen first.
pub fn build_vocabulary<'a, I, S>(corpora: I, max_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = &'a S>,
    S: AsRef<[String]> + 'a + ?Sized,
{
    if max_size == 0 {
        return Err(CorpusError::ZeroVocabulary);
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut next_order = 0usize;
    for seq in corpora {
        for tok in seq.as_ref() {
            if SPECIAL_TOKENS.contains(&tok.as_str()) {
                continue;
            }
            let entry = counts.entry(tok.as_str()).or_insert_with(|| {
                next_order += 1;
                (0, next_order)
            });
            entry.0 += 1;
        }
    }
    if counts.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ranked: Vec<(&str, usize, usize)> =
        counts.into_iter().map(|(t, (c, o))| (t, c, o)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));
    ranked.truncate(max_size);
    Ok(Vocabulary::from_tokens(ranked.into_iter().map(|(t, _, _)| t)))
}
