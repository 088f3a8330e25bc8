//! Binary checkpoint container.
//!
//! ```text
//! magic    "PGCK"
//! version  u16
//! header   u32 length + JSON {code_version, seed, config, meta}
//! vocab    u32 count, then per token u32 length + UTF-8
//! tensors  u32 count, then per tensor:
//!          u16 name length + name, u8 ndim, ndim × u32 dims,
//!          row-major f32 data
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::tensor::Tensor;
use crate::CODE_VERSION;

use super::config::{EmbeddingMode, ModelConfig};
use super::params::Params;
use super::{ModelError, Result};

const MAGIC: &[u8; 4] = b"PGCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub code_version: String,
    /// Free-form run information (input type, provider, split ids, ...).
    pub meta: serde_json::Value,
    pub vocab: Vocabulary,
    pub params: Params<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    code_version: String,
    seed: u64,
    config: ModelConfig,
    meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, seed: u64, vocab: Vocabulary, params: Params<f32>) -> Self {
        Self {
            config,
            seed,
            code_version: CODE_VERSION.to_string(),
            meta: serde_json::Value::Null,
            vocab,
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = Header {
            code_version: self.code_version.clone(),
            seed: self.seed,
            config: self.config.clone(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(self.vocab.len() as u32).to_le_bytes());
        for t in self.vocab.tokens() {
            out.extend_from_slice(&(t.len() as u32).to_le_bytes());
            out.extend_from_slice(t.as_bytes());
        }
        let tensors = self.params.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(ModelError::Corrupt("not a checkpoint file (bad magic)".into()));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = r.u32("header length")? as usize;
        let header: Header = serde_json::from_slice(r.take(len, "header")?)
            .map_err(|e| ModelError::Corrupt(format!("header: {e}")))?;
        let n_tokens = r.u32("vocabulary size")? as usize;
        let mut tokens = Vec::with_capacity(n_tokens.min(1 << 20));
        for _ in 0..n_tokens {
            let len = r.u32("token length")? as usize;
            let t = std::str::from_utf8(r.take(len, "token")?)
                .map_err(|_| ModelError::Corrupt("token is not UTF-8".into()))?;
            tokens.push(t.to_string());
        }
        let vocab = Vocabulary::from(tokens);
        if vocab.len() != n_tokens {
            return Err(ModelError::Corrupt("vocabulary has duplicate or misplaced entries".into()));
        }

        let static_table = (header.config.embedding == EmbeddingMode::Contextual)
            .then(|| Tensor::<f32>::zeros(&[vocab.len(), header.config.emb_dim]));
        let mut params = Params::<f32>::init(&header.config, vocab.len(), static_table.as_ref(), 0)?;
        let n_tensors = r.u32("tensor count")? as usize;
        let mut slots = params.tensors_mut();
        if n_tensors != slots.len() {
            return Err(ModelError::Corrupt(format!(
                "expected {} tensors, found {n_tensors}",
                slots.len()
            )));
        }
        for (expected_name, slot) in slots.iter_mut() {
            let len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "tensor name")?)
                .map_err(|_| ModelError::Corrupt("tensor name is not UTF-8".into()))?;
            if name != *expected_name {
                return Err(ModelError::Corrupt(format!("expected tensor `{expected_name}`, found `{name}`")));
            }
            let ndim = r.take(1, "ndim")?[0] as usize;
            let shape = (0..ndim)
                .map(|_| r.u32("dimension").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if shape != slot.shape {
                return Err(ModelError::ShapeMismatch {
                    name: name.to_string(),
                    expected: slot.shape.clone(),
                    found: shape,
                });
            }
            for x in slot.data.iter_mut() {
                *x = f32::from_le_bytes(r.array("tensor data")?);
            }
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Corrupt("trailing bytes after last tensor".into()));
        }
        if !params.is_finite() {
            return Err(ModelError::NonFinite("checkpoint parameters".into()));
        }
        Ok(Self {
            config: header.config,
            seed: header.seed,
            code_version: header.code_version,
            meta: header.meta,
            vocab,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Load and require the shape-determining settings to equal `expected`.
    pub fn load_compatible(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let ck = Self::load(path)?;
        ck.check_compatible(expected)?;
        Ok(ck)
    }

    pub fn check_compatible(&self, expected: &ModelConfig) -> Result<()> {
        let c = &self.config;
        let diffs: Vec<String> = [
            ("hidden_size", c.hidden_size, expected.hidden_size),
            ("emb_dim", c.emb_dim, expected.emb_dim),
            ("vocab_size", c.vocab_size, expected.vocab_size),
        ]
        .into_iter()
        .filter(|(_, a, b)| a != b)
        .map(|(n, a, b)| format!("{n} is {a} in the checkpoint but {b} was requested"))
        .chain((c.embedding != expected.embedding).then(|| {
            format!(
                "embedding is {:?} in the checkpoint but {:?} was requested",
                c.embedding, expected.embedding
            )
        }))
        .collect();
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(ModelError::ConfigMismatch(diffs.join("; ")))
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(ModelError::Corrupt(format!("file ends inside {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array(what)?))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
}
