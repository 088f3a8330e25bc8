use serde::{Deserialize, Serialize};

use super::{ModelError, Result};

/// Where the network's input vectors come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    /// A trainable `[vocab × emb_dim]` table.
    #[default]
    Learned,
    /// Frozen externally supplied vectors passed through a trainable affine
    /// adapter (identity-initialized).
    Contextual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Recurrent cell size per direction.
    pub hidden_size: usize,
    pub emb_dim: usize,
    pub embedding: EmbeddingMode,
    /// Maximum number of non-special vocabulary entries.
    pub vocab_size: usize,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    /// Coverage-loss weight used in phase 2.
    pub lambda_coverage: f64,
    /// Run phase 2 at all. When false the model is trained without the
    /// coverage loss.
    pub use_coverage: bool,
    pub beam_size: usize,
    pub max_decode_len: usize,
    pub phase1_iters: usize,
    pub phase2_iters: usize,
    pub learning_rate: f64,
    pub adagrad_init: f64,
    /// Validate and snapshot every this many iterations; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_size: 256,
            emb_dim: 128,
            embedding: EmbeddingMode::Learned,
            vocab_size: 50_000,
            batch_size: 16,
            max_grad_norm: 1.2,
            lambda_coverage: 1.0,
            use_coverage: true,
            beam_size: 4,
            max_decode_len: 100,
            phase1_iters: 20_000,
            phase2_iters: 1_000,
            learning_rate: 0.15,
            adagrad_init: 0.1,
            checkpoint_every: 1_000,
        }
    }
}

impl ModelConfig {
    /// Width of the additive attention layer.
    pub fn attn_dim(&self) -> usize {
        2 * self.hidden_size
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("emb_dim", self.emb_dim),
            ("vocab_size", self.vocab_size),
            ("batch_size", self.batch_size),
            ("beam_size", self.beam_size),
            ("max_decode_len", self.max_decode_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        let reals = [
            ("max_grad_norm", self.max_grad_norm),
            ("learning_rate", self.learning_rate),
            ("adagrad_init", self.adagrad_init),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.lambda_coverage.is_finite() && self.lambda_coverage >= 0.0) {
            return Err(ModelError::InvalidConfig(format!(
                "lambda_coverage must be non-negative, got {}",
                self.lambda_coverage
            )));
        }
        Ok(())
    }

    /// Iterations actually run in phase 2.
    pub fn effective_phase2_iters(&self) -> usize {
        if self.use_coverage {
            self.phase2_iters
        } else {
            0
        }
    }
}
