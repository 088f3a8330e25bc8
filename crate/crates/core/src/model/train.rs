//! Two-phase mini-batch training with Adagrad and global-norm clipping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::ExampleEncoding;
use crate::tensor::Tensor;

use super::config::ModelConfig;
use super::params::Params;
use super::{ModelError, Result};

/// One encoded example plus its frozen source vectors under contextual
/// embeddings.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub id: String,
    pub encoding: ExampleEncoding,
    pub source_rows: Option<Tensor<f32>>,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub phase: u8,
    pub nll: f64,
    pub cov_loss: f64,
    pub grad_norm: f64,
    /// Decoder steps whose target probability hit the floor.
    #[serde(default)]
    pub clamped: usize,
}

/// Callbacks invoked while training. Both default to doing nothing.
pub trait TrainHooks {
    fn on_iteration(&mut self, _record: &LogRecord) {}

    /// Called every `checkpoint_every` iterations and at the end of each
    /// phase, after validation.
    fn on_checkpoint(&mut self, _iter: usize, _phase: u8, _params: &Params<f32>, _val_loss: Option<f64>) {}
}

impl TrainHooks for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last iteration.
    pub params: Params<f32>,
    /// Lowest validation loss seen during the final phase, or the final
    /// parameters when there is no validation data.
    pub best: Params<f32>,
    pub best_iter: usize,
    pub best_val_loss: Option<f64>,
    /// Snapshot at the end of phase 1.
    pub phase1: Params<f32>,
    pub log: Vec<LogRecord>,
}

struct Adagrad {
    lr: f32,
    acc: Vec<Option<Tensor<f32>>>,
}

impl Adagrad {
    fn new(params: &Params<f32>, lr: f64, init: f64) -> Self {
        let acc = params
            .tensors()
            .into_iter()
            .map(|(name, t)| {
                Params::<f32>::is_trainable(name).then(|| Tensor::from_vec(&t.shape, vec![init as f32; t.len()]))
            })
            .collect();
        Self { lr: lr as f32, acc }
    }

    fn apply(&mut self, params: &mut Params<f32>, grads: &Params<f32>) {
        for (((_, p), (_, g)), acc) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut self.acc) {
            let Some(acc) = acc else { continue };
            for ((w, &dw), a) in p.data.iter_mut().zip(&g.data).zip(acc.data.iter_mut()) {
                *a += dw * dw;
                *w -= self.lr * dw / a.sqrt();
            }
        }
    }
}

fn grad_norm(grads: &Params<f32>) -> f64 {
    grads
        .tensors()
        .into_iter()
        .filter(|(n, _)| Params::<f32>::is_trainable(n))
        .flat_map(|(_, t)| t.data.iter())
        .map(|&x| (x as f64) * (x as f64))
        .sum::<f64>()
        .sqrt()
}

fn clip(grads: &mut Params<f32>, norm: f64, max_norm: f64) {
    if norm <= max_norm {
        return;
    }
    let s = (max_norm / norm) as f32;
    for (_, t) in grads.tensors_mut() {
        t.data.iter_mut().for_each(|x| *x *= s);
    }
}

/// Mean teacher-forced loss over `examples`.
pub fn validation_loss(params: &Params<f32>, examples: &[TrainingExample], lambda: f32) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += params.sequence_loss(&ex.encoding, ex.source_rows.as_ref(), lambda)? as f64;
    }
    Ok(total / examples.len().max(1) as f64)
}

struct Batches {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        Self { order, pos: 0, rng }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

/// Phase 1 minimizes the mean negative log-likelihood; phase 2 adds the
/// coverage loss weighted by `lambda_coverage`. The optimizer state carries
/// over between phases. Batches smaller than `batch_size` are used when the
/// training set is smaller.
pub fn train(
    init: Params<f32>,
    config: &ModelConfig,
    train: &[TrainingExample],
    val: &[TrainingExample],
    seed: u64,
    hooks: &mut dyn TrainHooks,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let mut params = init;
    let mut opt = Adagrad::new(&params, config.learning_rate, config.adagrad_init);
    let mut batches = Batches::new(train.len(), seed);
    let batch_size = config.batch_size.min(train.len());
    let scale = 1.0 / batch_size as f32;
    let mut grads = params.zeros_like();
    let mut log = Vec::new();

    let phases = [(1u8, config.phase1_iters, 0.0f32), (2u8, config.effective_phase2_iters(), config.lambda_coverage as f32)];
    let last_phase = if phases[1].1 > 0 { 2 } else { 1 };
    let mut phase1 = params.clone();
    let mut best: Option<(Params<f32>, usize, f64)> = None;
    let mut iter = 0usize;

    for (phase, iters, lambda) in phases {
        for k in 1..=iters {
            iter += 1;
            for (_, t) in grads.tensors_mut() {
                t.fill(0.0);
            }
            let (mut nll, mut cov, mut clamped) = (0.0f64, 0.0f64, 0usize);
            for &i in &batches.next(batch_size) {
                let ex = &train[i];
                let fwd = params.forward_sequence(&ex.encoding, ex.source_rows.as_ref(), lambda, true)?;
                if !fwd.loss.is_finite() {
                    return Err(ModelError::Diverged {
                        iter,
                        phase,
                        loss: fwd.loss as f64,
                    });
                }
                nll += fwd.nll as f64;
                cov += fwd.cov_loss as f64;
                clamped += fwd.clamped_steps();
                params.backward(&ex.encoding, &fwd, lambda, scale, &mut grads);
            }
            let norm = grad_norm(&grads);
            if !norm.is_finite() {
                return Err(ModelError::Diverged {
                    iter,
                    phase,
                    loss: f64::NAN,
                });
            }
            clip(&mut grads, norm, config.max_grad_norm);
            opt.apply(&mut params, &grads);

            let record = LogRecord {
                iter,
                phase,
                nll: nll / batch_size as f64,
                cov_loss: cov / batch_size as f64,
                grad_norm: norm,
                clamped,
            };
            hooks.on_iteration(&record);
            log.push(record);

            let cadence = config.checkpoint_every > 0 && iter.is_multiple_of(config.checkpoint_every);
            if cadence || k == iters {
                let val_loss = if val.is_empty() {
                    None
                } else {
                    Some(validation_loss(&params, val, lambda)?)
                };
                hooks.on_checkpoint(iter, phase, &params, val_loss);
                if let (Some(v), true) = (val_loss, phase == last_phase) {
                    if best.as_ref().is_none_or(|b| v < b.2) {
                        best = Some((params.clone(), iter, v));
                    }
                }
            }
        }
        if phase == 1 {
            phase1 = params.clone();
        }
    }

    let (best, best_iter, best_val_loss) = match best {
        Some((p, i, v)) => (p, i, Some(v)),
        None => (params.clone(), iter, None),
    };
    Ok(TrainOutcome {
        params,
        best,
        best_iter,
        best_val_loss,
        phase1,
        log,
    })
}
