use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tensor::{Scalar, Tensor};

use super::config::{EmbeddingMode, ModelConfig};
use super::{ModelError, Result};

/// Weights of one LSTM cell; gate rows are ordered input, forget, cell, output.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm<T> {
    pub w_ih: Tensor<T>,
    pub w_hh: Tensor<T>,
    pub b: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

/// Additive attention with a coverage feature.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub w_h: Tensor<T>,
    pub w_s: Tensor<T>,
    pub w_c: Tensor<T>,
    pub b: Tensor<T>,
    pub v: Tensor<T>,
}

/// Generation-probability gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Pointer<T> {
    pub w_ctx: Tensor<T>,
    pub w_s: Tensor<T>,
    pub w_x: Tensor<T>,
    pub b: Tensor<T>,
}

/// Every tensor of the network. Under [`EmbeddingMode::Contextual`] the
/// embedding table holds frozen per-token vectors for the decoder side and
/// `adapter` is present; otherwise the table is trained and `adapter` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub mode: EmbeddingMode,
    pub embedding: Tensor<T>,
    pub adapter: Option<Linear<T>>,
    pub enc_fw: Lstm<T>,
    pub enc_bw: Lstm<T>,
    pub reduce_h: Linear<T>,
    pub reduce_c: Linear<T>,
    pub dec: Lstm<T>,
    pub attn: Attention<T>,
    pub out: Linear<T>,
    pub ptr: Pointer<T>,
}

/// Initial forget-gate bias; other biases start at zero.
const FORGET_BIAS: f64 = 1.0;

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn uniform<T: Scalar>(&mut self, shape: &[usize], bound: f64) -> Tensor<T> {
        let len = shape.iter().product();
        let data = (0..len)
            .map(|_| T::from_f64_lossy(self.rng.gen_range(-bound..=bound)))
            .collect();
        Tensor::from_vec(shape, data)
    }

    fn weight<T: Scalar>(&mut self, rows: usize, fan_in: usize) -> Tensor<T> {
        self.uniform(&[rows, fan_in], 1.0 / (fan_in as f64).sqrt())
    }

    fn lstm<T: Scalar>(&mut self, input: usize, hidden: usize) -> Lstm<T> {
        let fan_in = input + hidden;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut b = vec![T::zero(); 4 * hidden];
        b[hidden..2 * hidden].fill(T::from_f64_lossy(FORGET_BIAS));
        Lstm {
            w_ih: self.uniform(&[4 * hidden, input], bound),
            w_hh: self.uniform(&[4 * hidden, hidden], bound),
            b: Tensor::from_vec(&[4 * hidden], b),
        }
    }

    fn linear<T: Scalar>(&mut self, out: usize, input: usize) -> Linear<T> {
        Linear {
            w: self.weight(out, input),
            b: Tensor::zeros(&[out]),
        }
    }
}

impl<T: Scalar> Params<T> {
    /// Fresh parameters for a vocabulary of `vocab_len` entries (specials
    /// included). Contextual mode needs the frozen decoder-side table.
    pub fn init(
        config: &ModelConfig,
        vocab_len: usize,
        static_table: Option<&Tensor<f32>>,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let (e, h, a) = (config.emb_dim, config.hidden_size, config.attn_dim());
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let (embedding, adapter) = match (config.embedding, static_table) {
            (EmbeddingMode::Learned, _) => (init.uniform(&[vocab_len, e], 0.1), None),
            (EmbeddingMode::Contextual, Some(table)) => {
                if table.shape != [vocab_len, e] {
                    return Err(ModelError::ShapeMismatch {
                        name: "embedding.static".into(),
                        expected: vec![vocab_len, e],
                        found: table.shape.clone(),
                    });
                }
                let adapter = Linear {
                    w: Tensor::identity(e),
                    b: Tensor::zeros(&[e]),
                };
                (table.cast(), Some(adapter))
            }
            (EmbeddingMode::Contextual, None) => {
                return Err(ModelError::InvalidConfig(
                    "contextual embeddings need a static decoder-side table".into(),
                ))
            }
        };
        let ptr_bound = 1.0 / ((3 * h + e) as f64).sqrt();
        Ok(Self {
            mode: config.embedding,
            embedding,
            adapter,
            enc_fw: init.lstm(e, h),
            enc_bw: init.lstm(e, h),
            reduce_h: init.linear(h, 2 * h),
            reduce_c: init.linear(h, 2 * h),
            dec: init.lstm(e, h),
            attn: Attention {
                w_h: init.weight(a, 2 * h),
                w_s: init.weight(a, h),
                w_c: init.uniform(&[a], 1.0),
                b: Tensor::zeros(&[a]),
                v: init.uniform(&[a], 1.0 / (a as f64).sqrt()),
            },
            out: init.linear(vocab_len, 3 * h),
            ptr: Pointer {
                w_ctx: init.uniform(&[2 * h], ptr_bound),
                w_s: init.uniform(&[h], ptr_bound),
                w_x: init.uniform(&[e], ptr_bound),
                b: Tensor::zeros(&[1]),
            },
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.embedding.rows()
    }

    pub fn emb_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.dec.w_hh.cols()
    }

    /// Same structure, every entry zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.tensors_mut() {
            t.fill(T::zero());
        }
        z
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        let lstm = |l: &Lstm<T>| Lstm {
            w_ih: l.w_ih.cast(),
            w_hh: l.w_hh.cast(),
            b: l.b.cast(),
        };
        let lin = |l: &Linear<T>| Linear {
            w: l.w.cast(),
            b: l.b.cast(),
        };
        Params {
            mode: self.mode,
            embedding: self.embedding.cast(),
            adapter: self.adapter.as_ref().map(lin),
            enc_fw: lstm(&self.enc_fw),
            enc_bw: lstm(&self.enc_bw),
            reduce_h: lin(&self.reduce_h),
            reduce_c: lin(&self.reduce_c),
            dec: lstm(&self.dec),
            attn: Attention {
                w_h: self.attn.w_h.cast(),
                w_s: self.attn.w_s.cast(),
                w_c: self.attn.w_c.cast(),
                b: self.attn.b.cast(),
                v: self.attn.v.cast(),
            },
            out: lin(&self.out),
            ptr: Pointer {
                w_ctx: self.ptr.w_ctx.cast(),
                w_s: self.ptr.w_s.cast(),
                w_x: self.ptr.w_x.cast(),
                b: self.ptr.b.cast(),
            },
        }
    }

    fn embedding_name(&self) -> &'static str {
        match self.mode {
            EmbeddingMode::Learned => "embedding.table",
            EmbeddingMode::Contextual => "embedding.static",
        }
    }

    /// All tensors with their stable names, in serialization order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut v = vec![(self.embedding_name(), &self.embedding)];
        if let Some(a) = &self.adapter {
            v.push(("adapter.weight", &a.w));
            v.push(("adapter.bias", &a.b));
        }
        for (prefix, l) in [("enc_fw", &self.enc_fw), ("enc_bw", &self.enc_bw)] {
            v.extend(lstm_names(prefix).into_iter().zip([&l.w_ih, &l.w_hh, &l.b]));
        }
        v.push(("reduce_h.w", &self.reduce_h.w));
        v.push(("reduce_h.b", &self.reduce_h.b));
        v.push(("reduce_c.w", &self.reduce_c.w));
        v.push(("reduce_c.b", &self.reduce_c.b));
        v.extend(lstm_names("dec").into_iter().zip([&self.dec.w_ih, &self.dec.w_hh, &self.dec.b]));
        v.extend([
            ("attn.w_h", &self.attn.w_h),
            ("attn.w_s", &self.attn.w_s),
            ("attn.w_c", &self.attn.w_c),
            ("attn.b", &self.attn.b),
            ("attn.v", &self.attn.v),
            ("out.w", &self.out.w),
            ("out.b", &self.out.b),
            ("ptr.w_ctx", &self.ptr.w_ctx),
            ("ptr.w_s", &self.ptr.w_s),
            ("ptr.w_x", &self.ptr.w_x),
            ("ptr.b", &self.ptr.b),
        ]);
        v
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor<T>)> {
        let emb_name = self.embedding_name();
        let mut v = vec![(emb_name, &mut self.embedding)];
        if let Some(a) = &mut self.adapter {
            v.push(("adapter.weight", &mut a.w));
            v.push(("adapter.bias", &mut a.b));
        }
        for (prefix, l) in [("enc_fw", &mut self.enc_fw), ("enc_bw", &mut self.enc_bw)] {
            v.extend(lstm_names(prefix).into_iter().zip([&mut l.w_ih, &mut l.w_hh, &mut l.b]));
        }
        v.push(("reduce_h.w", &mut self.reduce_h.w));
        v.push(("reduce_h.b", &mut self.reduce_h.b));
        v.push(("reduce_c.w", &mut self.reduce_c.w));
        v.push(("reduce_c.b", &mut self.reduce_c.b));
        let d = &mut self.dec;
        v.extend(lstm_names("dec").into_iter().zip([&mut d.w_ih, &mut d.w_hh, &mut d.b]));
        v.extend([
            ("attn.w_h", &mut self.attn.w_h),
            ("attn.w_s", &mut self.attn.w_s),
            ("attn.w_c", &mut self.attn.w_c),
            ("attn.b", &mut self.attn.b),
            ("attn.v", &mut self.attn.v),
            ("out.w", &mut self.out.w),
            ("out.b", &mut self.out.b),
            ("ptr.w_ctx", &mut self.ptr.w_ctx),
            ("ptr.w_s", &mut self.ptr.w_s),
            ("ptr.w_x", &mut self.ptr.w_x),
            ("ptr.b", &mut self.ptr.b),
        ]);
        v
    }

    /// Whether the optimizer updates the named tensor.
    pub fn is_trainable(name: &str) -> bool {
        name != "embedding.static"
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn num_trainable(&self) -> usize {
        self.tensors()
            .iter()
            .filter(|(n, _)| Self::is_trainable(n))
            .map(|(_, t)| t.len())
            .sum()
    }
}

fn lstm_names(prefix: &str) -> [&'static str; 3] {
    match prefix {
        "enc_fw" => ["enc_fw.w_ih", "enc_fw.w_hh", "enc_fw.b"],
        "enc_bw" => ["enc_bw.w_ih", "enc_bw.w_hh", "enc_bw.b"],
        _ => ["dec.w_ih", "dec.w_hh", "dec.b"],
    }
}
