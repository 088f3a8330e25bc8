use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

use super::provider::ContextualEncoder;

const PIECE_CHARS: usize = 4;
const WINDOW: usize = 2;
const SELF_WEIGHT: f32 = 0.75;

/// Deterministic stand-in for a pre-trained contextual encoder.
///
/// Words are cut into subword pieces of up to four characters, each piece gets
/// a fixed pseudo-random non-negative vector, and a word's input vector is the
/// mean of its pieces. The contextual vector for position `t` mixes that input
/// vector with the mean of its neighbours within two positions. Row 0 of
/// [`encode`](ContextualEncoder::encode) is the mean of the contextual rows.
#[derive(Debug, Clone)]
pub struct SyntheticEncoder {
    dim: usize,
    seed: u64,
}

impl SyntheticEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding width must be positive");
        Self { dim, seed }
    }

    fn pieces(word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        if chars.is_empty() {
            return vec![String::new()];
        }
        chars
            .chunks(PIECE_CHARS)
            .enumerate()
            .map(|(i, c)| {
                let s: String = c.iter().collect();
                if i == 0 {
                    s
                } else {
                    format!("##{s}")
                }
            })
            .collect()
    }

    fn piece_vector(&self, piece: &str) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(piece.as_bytes()) ^ self.seed);
        (0..self.dim).map(|_| rng.gen::<f32>()).collect()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ContextualEncoder for SyntheticEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, tokens: &[String]) -> Tensor<f32> {
        let base: Vec<Vec<f32>> = tokens.iter().map(|t| self.static_embedding(t)).collect();
        let n = tokens.len();
        let mut out = Tensor::zeros(&[n + 1, self.dim]);
        for t in 0..n {
            let lo = t.saturating_sub(WINDOW);
            let hi = (t + WINDOW).min(n.saturating_sub(1));
            let neighbours: Vec<usize> = (lo..=hi).filter(|&u| u != t).collect();
            let row = out.row_mut(t + 1);
            for (k, x) in row.iter_mut().enumerate() {
                let ctx = if neighbours.is_empty() {
                    base[t][k]
                } else {
                    neighbours.iter().map(|&u| base[u][k]).sum::<f32>() / neighbours.len() as f32
                };
                *x = SELF_WEIGHT * base[t][k] + (1.0 - SELF_WEIGHT) * ctx;
            }
        }
        if n > 0 {
            for k in 0..self.dim {
                let mean = (1..=n).map(|r| out.row(r)[k]).sum::<f32>() / n as f32;
                out.row_mut(0)[k] = mean;
            }
        }
        out
    }

    /// Mean of the word's subword piece vectors.
    fn static_embedding(&self, token: &str) -> Vec<f32> {
        let pieces = Self::pieces(token);
        let mut acc = vec![0f32; self.dim];
        for p in &pieces {
            for (a, x) in acc.iter_mut().zip(self.piece_vector(p)) {
                *a += x;
            }
        }
        acc.iter_mut().for_each(|a| *a /= pieces.len() as f32);
        acc
    }
}
