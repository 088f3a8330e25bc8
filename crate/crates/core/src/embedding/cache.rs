//! Binary container for precomputed contextual embeddings.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    "EMBC"
//! version  u16
//! dim      u32
//! count    u64
//! count × record:
//!     id_len      u32, then id_len bytes of UTF-8
//!     input_type  u8
//!     tokens      u32
//!     (tokens + 1) × dim × f32    row 0 is the sentence-level slot
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::InputType;
use crate::tensor::Tensor;

use super::{EmbeddingError, Result};

const MAGIC: &[u8; 4] = b"EMBC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub doc_id: String,
    pub input_type: InputType,
}

impl RecordKey {
    pub fn new(doc_id: impl Into<String>, input_type: InputType) -> Self {
        Self {
            doc_id: doc_id.into(),
            input_type,
        }
    }
}

/// Vectors for one composed token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheRecord {
    /// Sentence-level vector. Stored but not consumed by the model.
    pub sentence: Vec<f32>,
    /// One row per token, `[tokens × dim]`.
    pub tokens: Tensor<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCache {
    pub dim: usize,
    pub records: BTreeMap<RecordKey, CacheRecord>,
}

impl EmbeddingCache {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            records: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: RecordKey, record: CacheRecord) -> Result<()> {
        if record.sentence.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                expected: self.dim,
                found: record.sentence.len(),
            });
        }
        if record.tokens.cols() != self.dim && !record.tokens.is_empty() {
            return Err(EmbeddingError::DimMismatch {
                expected: self.dim,
                found: record.tokens.cols(),
            });
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn get(&self, key: &RecordKey) -> Option<&CacheRecord> {
        self.records.get(key)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Serialize to bytes. Records are written in key order, so equal caches
    /// produce identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for (key, rec) in &self.records {
            out.extend_from_slice(&(key.doc_id.len() as u32).to_le_bytes());
            out.extend_from_slice(key.doc_id.as_bytes());
            out.push(key.input_type.code());
            out.extend_from_slice(&(rec.tokens.rows() as u32).to_le_bytes());
            for x in rec.sentence.iter().chain(&rec.tokens.data) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(EmbeddingError::Corrupt("bad magic bytes".into()));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != VERSION {
            return Err(EmbeddingError::Corrupt(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(r.array("dim")?) as usize;
        if dim == 0 {
            return Err(EmbeddingError::Corrupt("zero embedding width".into()));
        }
        let count = u64::from_le_bytes(r.array("record count")?);
        let mut cache = EmbeddingCache::new(dim);
        for n in 0..count {
            let what = format!("record {n}");
            let id_len = u32::from_le_bytes(r.array(&what)?) as usize;
            let id = std::str::from_utf8(r.take(id_len, &what)?)
                .map_err(|_| EmbeddingError::Corrupt(format!("{what}: id is not UTF-8")))?
                .to_string();
            let code = r.take(1, &what)?[0];
            let input_type = InputType::from_code(code)
                .ok_or_else(|| EmbeddingError::Corrupt(format!("{what}: input type {code}")))?;
            let tokens = u32::from_le_bytes(r.array(&what)?) as usize;
            let floats = (tokens + 1)
                .checked_mul(dim)
                .ok_or_else(|| EmbeddingError::Corrupt(format!("{what}: size overflow")))?;
            let raw = r.take(floats * 4, &what)?;
            let mut values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let token_rows = values.split_off(dim);
            let key = RecordKey::new(id, input_type);
            if cache.records.contains_key(&key) {
                return Err(EmbeddingError::Corrupt(format!("{what}: duplicate key")));
            }
            cache.records.insert(
                key,
                CacheRecord {
                    sentence: values,
                    tokens: Tensor::from_vec(&[tokens, dim], token_rows),
                },
            );
        }
        if r.pos != bytes.len() {
            return Err(EmbeddingError::Corrupt(format!(
                "{} trailing bytes after the last record",
                bytes.len() - r.pos
            )));
        }
        Ok(cache)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EmbeddingError::Truncated(what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

pub fn write_cache(path: impl AsRef<Path>, cache: &EmbeddingCache) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&cache.to_bytes())?;
    Ok(())
}

/// Read a cache file; with `expected_dim`, a width mismatch is an error.
pub fn read_cache(path: impl AsRef<Path>, expected_dim: Option<usize>) -> Result<EmbeddingCache> {
    let cache = EmbeddingCache::from_bytes(&fs::read(path)?)?;
    if let Some(expected) = expected_dim {
        if cache.dim != expected {
            return Err(EmbeddingError::DimMismatch {
                expected,
                found: cache.dim,
            });
        }
    }
    Ok(cache)
}
