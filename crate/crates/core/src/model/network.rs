//! Forward and backward passes of the pointer-generator network.

use crate::corpus::{ExampleEncoding, START, UNK};
use crate::tensor::{axpy, dot, matvec_acc, matvec_t_acc, outer_acc, sigmoid, softmax_backward, softmax_in_place, Scalar, Tensor};

use super::config::EmbeddingMode;
use super::params::{Lstm, Params};
use super::{ModelError, Result};

/// Floor applied to the target probability inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
struct LstmStep<T> {
    x: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
    /// Activated gates: input, forget, candidate, output.
    gates: Vec<T>,
    c: Vec<T>,
    tanh_c: Vec<T>,
    h: Vec<T>,
}

fn lstm_forward<T: Scalar>(cell: &Lstm<T>, x: &[T], h_prev: &[T], c_prev: &[T]) -> LstmStep<T> {
    let hd = h_prev.len();
    let mut z = cell.b.data.clone();
    matvec_acc(&cell.w_ih.data, x, &mut z);
    matvec_acc(&cell.w_hh.data, h_prev, &mut z);
    let mut c = vec![T::zero(); hd];
    let mut tanh_c = vec![T::zero(); hd];
    let mut h = vec![T::zero(); hd];
    for k in 0..hd {
        z[k] = sigmoid(z[k]);
        z[hd + k] = sigmoid(z[hd + k]);
        z[2 * hd + k] = z[2 * hd + k].tanh();
        z[3 * hd + k] = sigmoid(z[3 * hd + k]);
        c[k] = z[hd + k] * c_prev[k] + z[k] * z[2 * hd + k];
        tanh_c[k] = c[k].tanh();
        h[k] = z[3 * hd + k] * tanh_c[k];
    }
    LstmStep {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        c,
        tanh_c,
        h,
    }
}

/// Accumulates parameter gradients into `grads` and input/state gradients
/// into `dx`, `dh_prev`, `dc_prev`.
#[allow(clippy::too_many_arguments)]
fn lstm_backward<T: Scalar>(
    cell: &Lstm<T>,
    grads: &mut Lstm<T>,
    step: &LstmStep<T>,
    dh: &[T],
    dc: &[T],
    dx: &mut [T],
    dh_prev: &mut [T],
    dc_prev: &mut [T],
) {
    let hd = dh.len();
    let one = T::one();
    let g = &step.gates;
    let mut dz = vec![T::zero(); 4 * hd];
    for k in 0..hd {
        let (i, f, cand, o) = (g[k], g[hd + k], g[2 * hd + k], g[3 * hd + k]);
        let tc = step.tanh_c[k];
        let dct = dc[k] + dh[k] * o * (one - tc * tc);
        dz[k] = dct * cand * i * (one - i);
        dz[hd + k] = dct * step.c_prev[k] * f * (one - f);
        dz[2 * hd + k] = dct * i * (one - cand * cand);
        dz[3 * hd + k] = dh[k] * tc * o * (one - o);
        dc_prev[k] = dc_prev[k] + dct * f;
    }
    outer_acc(&mut grads.w_ih.data, &dz, &step.x);
    outer_acc(&mut grads.w_hh.data, &dz, &step.h_prev);
    axpy(one, &dz, &mut grads.b.data);
    matvec_t_acc(&cell.w_ih.data, &dz, dx);
    matvec_t_acc(&cell.w_hh.data, &dz, dh_prev);
}

/// Encoder states plus what the backward pass needs.
#[derive(Debug, Clone)]
pub struct EncoderOutput<T> {
    /// `[src_len × 2·hidden]`, forward then backward state per position.
    pub states: Tensor<T>,
    /// Attention projection of each state, `[src_len × attn_dim]`.
    pub features: Tensor<T>,
    pub init_h: Vec<T>,
    pub init_c: Vec<T>,
    raw: Tensor<T>,
    fw: Vec<LstmStep<T>>,
    bw: Vec<LstmStep<T>>,
    reduce_h_in: Vec<T>,
    reduce_c_in: Vec<T>,
}

impl<T: Scalar> EncoderOutput<T> {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub s: Vec<T>,
    pub cell: Vec<T>,
    /// Sum of all earlier attention distributions.
    pub coverage: Vec<T>,
}

/// One decoder step: the new state and everything computed along the way.
#[derive(Debug, Clone)]
pub struct StepCache<T> {
    pub input_id: usize,
    /// Decoder input vector after the adapter, if any.
    pub x: Vec<T>,
    pub attention: Vec<T>,
    /// Coverage going into this step.
    pub coverage: Vec<T>,
    pub context: Vec<T>,
    pub p_vocab: Vec<T>,
    pub p_gen: T,
    pub next: DecoderState<T>,
    x_raw: Vec<T>,
    lstm: LstmStep<T>,
    /// `tanh` of the attention pre-activations, `[src_len × attn_dim]`.
    u: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput<T> {
    /// Distribution over the vocabulary followed by the example's OOV words.
    pub extended_dist: Vec<T>,
    pub p_gen: T,
    pub nll: T,
    pub cov_loss: T,
    /// The target probability fell below [`PROB_FLOOR`].
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct SequenceForward<T> {
    pub encoder: EncoderOutput<T>,
    pub steps: Vec<StepCache<T>>,
    pub outputs: Vec<StepOutput<T>>,
    /// Mean over steps of `nll + λ·cov_loss`.
    pub loss: T,
    pub nll: T,
    pub cov_loss: T,
}

impl<T: Scalar> SequenceForward<T> {
    pub fn clamped_steps(&self) -> usize {
        self.outputs.iter().filter(|o| o.clamped).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLoss<T> {
    pub nll: T,
    pub cov_loss: T,
    pub total: T,
    pub clamped: bool,
}

/// `p_gen · p_vocab` on vocabulary entries plus `(1 − p_gen) · attention`
/// scattered onto each source position's extended id.
pub fn extended_distribution<T: Scalar>(
    p_vocab: &[T],
    attention: &[T],
    p_gen: T,
    source_ext_ids: &[usize],
    extended_len: usize,
) -> Vec<T> {
    let mut dist = vec![T::zero(); extended_len];
    for (d, &p) in dist.iter_mut().zip(p_vocab) {
        *d = p_gen * p;
    }
    let copy = T::one() - p_gen;
    for (&id, &a) in source_ext_ids.iter().zip(attention) {
        dist[id] = dist[id] + copy * a;
    }
    dist
}

pub fn update_coverage<T: Scalar>(coverage: &[T], attention: &[T]) -> Vec<T> {
    coverage.iter().zip(attention).map(|(&c, &a)| c + a).collect()
}

/// `Σ_i min(a_i, c_i)`
pub fn coverage_loss<T: Scalar>(attention: &[T], coverage: &[T]) -> T {
    attention.iter().zip(coverage).map(|(&a, &c)| a.min(c)).sum()
}

pub fn step_loss<T: Scalar>(dist: &[T], target: usize, attention: &[T], coverage: &[T], lambda: T) -> StepLoss<T> {
    let floor = T::from_f64_lossy(PROB_FLOOR);
    let p = dist[target];
    let clamped = p < floor;
    let nll = -p.max(floor).ln();
    let cov_loss = coverage_loss(attention, coverage);
    StepLoss {
        nll,
        cov_loss,
        total: nll + lambda * cov_loss,
        clamped,
    }
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl<T: Scalar> Params<T> {
    fn adapt(&self, raw: &[T]) -> Vec<T> {
        match &self.adapter {
            Some(a) => {
                let mut x = a.b.data.clone();
                matvec_acc(&a.w.data, raw, &mut x);
                x
            }
            None => raw.to_vec(),
        }
    }

    /// Raw encoder input rows: table rows for learned embeddings, the supplied
    /// contextual rows otherwise.
    pub fn source_embeddings(&self, ex: &ExampleEncoding, external: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let (s, e) = (ex.source_len(), self.emb_dim());
        if s == 0 {
            return Err(ModelError::EmptySource);
        }
        match (self.mode, external) {
            (EmbeddingMode::Learned, _) => {
                let mut data = Vec::with_capacity(s * e);
                for &id in &ex.source_ids {
                    data.extend_from_slice(self.embedding.row(id));
                }
                Ok(Tensor::from_vec(&[s, e], data))
            }
            (EmbeddingMode::Contextual, Some(rows)) => {
                if rows.shape != [s, e] {
                    return Err(ModelError::ShapeMismatch {
                        name: "source embeddings".into(),
                        expected: vec![s, e],
                        found: rows.shape.clone(),
                    });
                }
                Ok(rows.clone())
            }
            (EmbeddingMode::Contextual, None) => Err(ModelError::MissingSourceEmbeddings),
        }
    }

    /// Bidirectional encoder over raw input rows `[src_len × emb_dim]`.
    pub fn encode(&self, raw: &Tensor<T>) -> Result<EncoderOutput<T>> {
        let s = raw.rows();
        if s == 0 {
            return Err(ModelError::EmptySource);
        }
        if !raw.is_finite() {
            return Err(ModelError::NonFinite("encoder input".into()));
        }
        let h = self.hidden_size();
        let inputs: Vec<Vec<T>> = (0..s).map(|i| self.adapt(raw.row(i))).collect();
        let zero = vec![T::zero(); h];

        let mut fw: Vec<LstmStep<T>> = Vec::with_capacity(s);
        for x in &inputs {
            let step = match fw.last() {
                Some(p) => lstm_forward(&self.enc_fw, x, &p.h, &p.c),
                None => lstm_forward(&self.enc_fw, x, &zero, &zero),
            };
            fw.push(step);
        }
        let mut bw: Vec<Option<LstmStep<T>>> = vec![None; s];
        for i in (0..s).rev() {
            let step = match bw.get(i + 1).and_then(|b| b.as_ref()) {
                Some(p) => lstm_forward(&self.enc_bw, &inputs[i], &p.h, &p.c),
                None => lstm_forward(&self.enc_bw, &inputs[i], &zero, &zero),
            };
            bw[i] = Some(step);
        }
        let bw: Vec<LstmStep<T>> = bw.into_iter().map(|b| b.expect("filled")).collect();

        let mut states = Tensor::zeros(&[s, 2 * h]);
        for i in 0..s {
            let row = states.row_mut(i);
            row[..h].copy_from_slice(&fw[i].h);
            row[h..].copy_from_slice(&bw[i].h);
        }
        let a = self.attn.w_h.rows();
        let mut features = Tensor::zeros(&[s, a]);
        for i in 0..s {
            let (st, f) = (states.row(i).to_vec(), features.row_mut(i));
            matvec_acc(&self.attn.w_h.data, &st, f);
        }
        let reduce_h_in = [fw[s - 1].h.as_slice(), bw[0].h.as_slice()].concat();
        let reduce_c_in = [fw[s - 1].c.as_slice(), bw[0].c.as_slice()].concat();
        let mut init_h = self.reduce_h.b.data.clone();
        matvec_acc(&self.reduce_h.w.data, &reduce_h_in, &mut init_h);
        let mut init_c = self.reduce_c.b.data.clone();
        matvec_acc(&self.reduce_c.w.data, &reduce_c_in, &mut init_c);
        Ok(EncoderOutput {
            states,
            features,
            init_h,
            init_c,
            raw: raw.clone(),
            fw,
            bw,
            reduce_h_in,
            reduce_c_in,
        })
    }

    pub fn initial_state(&self, enc: &EncoderOutput<T>) -> DecoderState<T> {
        DecoderState {
            s: enc.init_h.clone(),
            cell: enc.init_c.clone(),
            coverage: vec![T::zero(); enc.len()],
        }
    }

    fn attend_inner(&self, s: &[T], enc: &EncoderOutput<T>, coverage: &[T]) -> (Vec<T>, Vec<T>, Vec<T>) {
        let a_dim = self.attn.v.len();
        let mut dec_feat = self.attn.b.data.clone();
        matvec_acc(&self.attn.w_s.data, s, &mut dec_feat);
        let n = enc.len();
        let mut u = vec![T::zero(); n * a_dim];
        let mut energies = vec![T::zero(); n];
        for i in 0..n {
            let feat = enc.features.row(i);
            let ui = &mut u[i * a_dim..(i + 1) * a_dim];
            for k in 0..a_dim {
                ui[k] = (feat[k] + dec_feat[k] + self.attn.w_c.data[k] * coverage[i]).tanh();
            }
            energies[i] = dot(&self.attn.v.data, ui);
        }
        softmax_in_place(&mut energies);
        let mut context = vec![T::zero(); enc.states.cols()];
        for (i, &a) in energies.iter().enumerate() {
            axpy(a, enc.states.row(i), &mut context);
        }
        (energies, context, u)
    }

    /// Attention distribution and context vector for decoder state `s`.
    pub fn attend(&self, s: &[T], enc: &EncoderOutput<T>, coverage: &[T]) -> (Vec<T>, Vec<T>) {
        let (a, ctx, _) = self.attend_inner(s, enc, coverage);
        (a, ctx)
    }

    /// Probability of generating from the vocabulary rather than copying.
    pub fn generation_probability(&self, context: &[T], s: &[T], x: &[T]) -> T {
        let z = dot(&self.ptr.w_ctx.data, context) + dot(&self.ptr.w_s.data, s) + dot(&self.ptr.w_x.data, x) + self.ptr.b.data[0];
        sigmoid(z)
    }

    pub fn vocab_distribution(&self, s: &[T], context: &[T]) -> Vec<T> {
        let input = [s, context].concat();
        let mut logits = self.out.b.data.clone();
        matvec_acc(&self.out.w.data, &input, &mut logits);
        softmax_in_place(&mut logits);
        logits
    }

    /// Input vector fed to the decoder for vocabulary id `id`.
    pub fn decoder_input(&self, id: usize) -> Vec<T> {
        self.adapt(self.embedding.row(id))
    }

    /// Advance the decoder by one token. `input_id` must be a vocabulary id.
    pub fn step(&self, enc: &EncoderOutput<T>, state: &DecoderState<T>, input_id: usize) -> StepCache<T> {
        let x_raw = self.embedding.row(input_id).to_vec();
        let x = self.adapt(&x_raw);
        let lstm = lstm_forward(&self.dec, &x, &state.s, &state.cell);
        let (attention, context, u) = self.attend_inner(&lstm.h, enc, &state.coverage);
        let p_vocab = self.vocab_distribution(&lstm.h, &context);
        let p_gen = self.generation_probability(&context, &lstm.h, &x);
        let next = DecoderState {
            s: lstm.h.clone(),
            cell: lstm.c.clone(),
            coverage: update_coverage(&state.coverage, &attention),
        };
        StepCache {
            input_id,
            x,
            attention,
            coverage: state.coverage.clone(),
            context,
            p_vocab,
            p_gen,
            next,
            x_raw,
            lstm,
            u,
        }
    }

    /// Run the decoder over the example's target. With teacher forcing the
    /// gold token is fed at each step (START first); otherwise the previous
    /// argmax. OOV inputs are fed as UNK.
    pub fn forward_sequence(
        &self,
        ex: &ExampleEncoding,
        external: Option<&Tensor<T>>,
        lambda: T,
        teacher_forcing: bool,
    ) -> Result<SequenceForward<T>> {
        if ex.vocab_len != self.vocab_len() {
            return Err(ModelError::ShapeMismatch {
                name: "vocabulary".into(),
                expected: vec![self.vocab_len()],
                found: vec![ex.vocab_len],
            });
        }
        let raw = self.source_embeddings(ex, external)?;
        let enc = self.encode(&raw)?;
        let mut state = self.initial_state(&enc);
        let n = ex.target_len();
        let mut steps = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut input = START;
        let vocab_len = self.vocab_len();
        for t in 0..n {
            let step = self.step(&enc, &state, input);
            let dist = extended_distribution(&step.p_vocab, &step.attention, step.p_gen, &ex.source_ext_ids, ex.extended_len());
            let loss = step_loss(&dist, ex.target_ext_ids[t], &step.attention, &step.coverage, lambda);
            input = if teacher_forcing {
                ex.target_ids[t]
            } else {
                argmax(&dist)
            };
            if input >= vocab_len {
                input = UNK;
            }
            state = step.next.clone();
            outputs.push(StepOutput {
                extended_dist: dist,
                p_gen: step.p_gen,
                nll: loss.nll,
                cov_loss: loss.cov_loss,
                clamped: loss.clamped,
            });
            steps.push(step);
        }
        let count = T::from_f64_lossy(n as f64);
        let nll = outputs.iter().map(|o| o.nll).sum::<T>() / count;
        let cov = outputs.iter().map(|o| o.cov_loss).sum::<T>() / count;
        let loss = outputs.iter().map(|o| o.nll + lambda * o.cov_loss).sum::<T>() / count;
        Ok(SequenceForward {
            encoder: enc,
            steps,
            outputs,
            loss,
            nll,
            cov_loss: cov,
        })
    }

    /// Scalar loss only; used by finite-difference checks.
    pub fn sequence_loss(&self, ex: &ExampleEncoding, external: Option<&Tensor<T>>, lambda: T) -> Result<T> {
        Ok(self.forward_sequence(ex, external, lambda, true)?.loss)
    }

    /// Accumulate `scale · ∂loss/∂θ` into `grads` for a teacher-forced
    /// forward pass.
    pub fn backward(&self, ex: &ExampleEncoding, fwd: &SequenceForward<T>, lambda: T, scale: T, grads: &mut Params<T>) {
        let enc = &fwd.encoder;
        let (s_len, h, a_dim) = (enc.len(), self.hidden_size(), self.attn.v.len());
        let e = self.emb_dim();
        let v_len = self.vocab_len();
        let one = T::one();
        let w = scale / T::from_f64_lossy(fwd.steps.len() as f64);
        let lw = w * lambda;

        let mut denc = Tensor::<T>::zeros(&[s_len, 2 * h]);
        let mut denc_feat = Tensor::<T>::zeros(&[s_len, a_dim]);
        let mut dh_next = vec![T::zero(); h];
        let mut dcell_next = vec![T::zero(); h];
        let mut dcov_next = vec![T::zero(); s_len];

        for t in (0..fwd.steps.len()).rev() {
            let st = &fwd.steps[t];
            let out = &fwd.outputs[t];
            let y = ex.target_ext_ids[t];
            let a = &st.attention;
            let pg = st.p_gen;

            // c_{t+1} = c_t + a_t
            let mut da = dcov_next.clone();
            let mut dc = dcov_next.clone();
            if lw != T::zero() {
                for i in 0..s_len {
                    if a[i] < st.coverage[i] {
                        da[i] = da[i] + lw;
                    } else {
                        dc[i] = dc[i] + lw;
                    }
                }
            }

            let mut ds = dh_next.clone();
            let mut dctx = vec![T::zero(); 2 * h];
            let mut dx = vec![T::zero(); e];

            if !out.clamped {
                let dp = -w / out.extended_dist[y];
                let pv_y = if y < v_len { st.p_vocab[y] } else { T::zero() };
                let mut copy = T::zero();
                for (i, &id) in ex.source_ext_ids.iter().enumerate() {
                    if id == y {
                        copy = copy + a[i];
                        da[i] = da[i] + dp * (one - pg);
                    }
                }
                let dpg = dp * (pv_y - copy);

                if y < v_len {
                    // softmax backward with a single non-zero upstream entry
                    let g = dp * pg;
                    let mut dlogits: Vec<T> = st.p_vocab.iter().map(|&p| -p * pv_y * g).collect();
                    dlogits[y] = dlogits[y] + pv_y * g;
                    let out_in = [st.next.s.as_slice(), st.context.as_slice()].concat();
                    outer_acc(&mut grads.out.w.data, &dlogits, &out_in);
                    axpy(one, &dlogits, &mut grads.out.b.data);
                    let mut dout_in = vec![T::zero(); 3 * h];
                    matvec_t_acc(&self.out.w.data, &dlogits, &mut dout_in);
                    axpy(one, &dout_in[..h], &mut ds);
                    axpy(one, &dout_in[h..], &mut dctx);
                }

                let dz = dpg * pg * (one - pg);
                axpy(dz, &st.context, &mut grads.ptr.w_ctx.data);
                axpy(dz, &st.next.s, &mut grads.ptr.w_s.data);
                axpy(dz, &st.x, &mut grads.ptr.w_x.data);
                grads.ptr.b.data[0] = grads.ptr.b.data[0] + dz;
                axpy(dz, &self.ptr.w_ctx.data, &mut dctx);
                axpy(dz, &self.ptr.w_s.data, &mut ds);
                axpy(dz, &self.ptr.w_x.data, &mut dx);
            }

            // context = Σ a_i enc_i
            for i in 0..s_len {
                da[i] = da[i] + dot(&dctx, enc.states.row(i));
                axpy(a[i], &dctx, denc.row_mut(i));
            }

            let mut de = vec![T::zero(); s_len];
            softmax_backward(a, &da, &mut de);
            let mut ddec_feat = vec![T::zero(); a_dim];
            let mut dpre = vec![T::zero(); a_dim];
            for i in 0..s_len {
                if de[i] == T::zero() {
                    continue;
                }
                let ui = &st.u[i * a_dim..(i + 1) * a_dim];
                axpy(de[i], ui, &mut grads.attn.v.data);
                for k in 0..a_dim {
                    dpre[k] = de[i] * self.attn.v.data[k] * (one - ui[k] * ui[k]);
                }
                axpy(one, &dpre, denc_feat.row_mut(i));
                axpy(one, &dpre, &mut ddec_feat);
                axpy(st.coverage[i], &dpre, &mut grads.attn.w_c.data);
                dc[i] = dc[i] + dot(&dpre, &self.attn.w_c.data);
            }
            axpy(one, &ddec_feat, &mut grads.attn.b.data);
            outer_acc(&mut grads.attn.w_s.data, &ddec_feat, &st.next.s);
            matvec_t_acc(&self.attn.w_s.data, &ddec_feat, &mut ds);
            dcov_next = dc;

            let mut dh_prev = vec![T::zero(); h];
            let mut dcell_prev = vec![T::zero(); h];
            lstm_backward(&self.dec, &mut grads.dec, &st.lstm, &ds, &dcell_next, &mut dx, &mut dh_prev, &mut dcell_prev);
            dh_next = dh_prev;
            dcell_next = dcell_prev;
            self.embedding_backward(grads, st.input_id, &st.x_raw, &dx);
        }

        // initial decoder state
        let mut dh_in = vec![T::zero(); 2 * h];
        let mut dc_in = vec![T::zero(); 2 * h];
        outer_acc(&mut grads.reduce_h.w.data, &dh_next, &enc.reduce_h_in);
        axpy(one, &dh_next, &mut grads.reduce_h.b.data);
        matvec_t_acc(&self.reduce_h.w.data, &dh_next, &mut dh_in);
        outer_acc(&mut grads.reduce_c.w.data, &dcell_next, &enc.reduce_c_in);
        axpy(one, &dcell_next, &mut grads.reduce_c.b.data);
        matvec_t_acc(&self.reduce_c.w.data, &dcell_next, &mut dc_in);

        for i in 0..s_len {
            let df = denc_feat.row(i);
            outer_acc(&mut grads.attn.w_h.data, df, enc.states.row(i));
            matvec_t_acc(&self.attn.w_h.data, df, denc.row_mut(i));
        }

        let mut dx_src = Tensor::<T>::zeros(&[s_len, e]);
        let mut carry_h = dh_in[..h].to_vec();
        let mut carry_c = dc_in[..h].to_vec();
        for i in (0..s_len).rev() {
            let dh: Vec<T> = carry_h.iter().zip(&denc.row(i)[..h]).map(|(&a, &b)| a + b).collect();
            let mut nh = vec![T::zero(); h];
            let mut nc = vec![T::zero(); h];
            lstm_backward(&self.enc_fw, &mut grads.enc_fw, &enc.fw[i], &dh, &carry_c, dx_src.row_mut(i), &mut nh, &mut nc);
            carry_h = nh;
            carry_c = nc;
        }
        let mut carry_h = dh_in[h..].to_vec();
        let mut carry_c = dc_in[h..].to_vec();
        for i in 0..s_len {
            let dh: Vec<T> = carry_h.iter().zip(&denc.row(i)[h..]).map(|(&a, &b)| a + b).collect();
            let mut nh = vec![T::zero(); h];
            let mut nc = vec![T::zero(); h];
            lstm_backward(&self.enc_bw, &mut grads.enc_bw, &enc.bw[i], &dh, &carry_c, dx_src.row_mut(i), &mut nh, &mut nc);
            carry_h = nh;
            carry_c = nc;
        }
        for i in 0..s_len {
            self.embedding_backward(grads, ex.source_ids[i], enc.raw.row(i), dx_src.row(i));
        }
    }

    fn embedding_backward(&self, grads: &mut Params<T>, id: usize, raw: &[T], dx: &[T]) {
        match (&self.adapter, &mut grads.adapter) {
            (Some(_), Some(ga)) => {
                outer_acc(&mut ga.w.data, dx, raw);
                axpy(T::one(), dx, &mut ga.b.data);
            }
            _ => axpy(T::one(), dx, grads.embedding.row_mut(id)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny(h: usize, e: usize) -> ModelConfig {
        ModelConfig {
            hidden_size: h,
            emb_dim: e,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn extended_distribution_worked_example() {
        // vocab {a,b,c,d} plus four specials; source ["foo", "a"], foo OOV.
        let mut pv = vec![0.0f64; 8];
        for p in &mut pv[4..] {
            *p = 0.25;
        }
        let d = extended_distribution(&pv, &[0.6, 0.4], 0.5, &[8, 4], 9);
        assert!((d[8] - 0.30).abs() < 1e-12);
        assert!((d[4] - 0.325).abs() < 1e-12);
        for k in 5..8 {
            assert!((d[k] - 0.125).abs() < 1e-12);
        }
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extended_distribution_limits() {
        let pv = vec![0.1, 0.2, 0.3, 0.4];
        let d = extended_distribution(&pv, &[0.5, 0.5], 1.0, &[4, 2], 5);
        assert_eq!(&d[..4], &pv[..]);
        assert_eq!(d[4], 0.0);
        let d = extended_distribution(&pv, &[1.0, 0.0], 0.0, &[3, 2], 5);
        assert_eq!(d[3], 1.0);
    }

    #[test]
    fn step_loss_hand_cases() {
        let l = step_loss(&[0.0, 1.0], 1, &[1.0], &[0.0], 1.0);
        assert_eq!((l.nll, l.cov_loss, l.total), (0.0, 0.0, 0.0));
        let l = step_loss(&[0.5, 0.5], 0, &[0.3, 0.7], &[0.2, 0.0], 1.0);
        assert!((l.total - (2f64.ln() + 0.2)).abs() < 1e-12);
        let a = [0.25f64, 0.75];
        assert!((step_loss(&[1.0], 0, &a, &a, 1.0).cov_loss - 1.0).abs() < 1e-15);
        let l = step_loss(&[0.0, 1.0], 0, &[1.0], &[0.0], 0.0);
        assert!(l.clamped);
        assert!((l.nll - 1e12f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn coverage_accumulates() {
        let c0 = vec![0.0; 3];
        let c1 = update_coverage(&c0, &[0.2, 0.3, 0.5]);
        assert_eq!(c1, [0.2, 0.3, 0.5]);
    }

    #[test]
    fn zero_weights_give_zero_states() {
        let mut p = Params::<f64>::init(&tiny(3, 2), 6, None, 0).unwrap();
        for (_, t) in p.tensors_mut() {
            t.fill(0.0);
        }
        let raw = Tensor::from_vec(&[2, 2], vec![0.3, -0.1, 0.7, 0.2]);
        let enc = p.encode(&raw).unwrap();
        assert!(enc.states.data.iter().all(|&x| x == 0.0));
        assert_eq!(enc.states.shape, [2, 6]);
    }

    #[test]
    fn uniform_attention_over_identical_states() {
        let p = Params::<f64>::init(&tiny(4, 3), 6, None, 5).unwrap();
        let raw = Tensor::from_vec(&[1, 3], vec![0.1, 0.2, 0.3]);
        let mut enc = p.encode(&raw).unwrap();
        let row = enc.states.row(0).to_vec();
        let feat = enc.features.row(0).to_vec();
        enc.states = Tensor::from_vec(&[4, 8], row.repeat(4));
        enc.features = Tensor::from_vec(&[4, 8], feat.repeat(4));
        let (a, ctx) = p.attend(&[0.1, -0.2, 0.3, 0.0], &enc, &[0.0; 4]);
        for &x in &a {
            assert!((x - 0.25).abs() < 1e-12);
        }
        for (c, r) in ctx.iter().zip(&row) {
            assert!((c - r).abs() < 1e-12);
        }
    }

    #[test]
    fn generation_probability_closed_forms() {
        let mut p = Params::<f64>::init(&tiny(2, 2), 6, None, 0).unwrap();
        for t in [&mut p.ptr.w_ctx, &mut p.ptr.w_s, &mut p.ptr.w_x] {
            t.fill(0.0);
        }
        assert_eq!(p.generation_probability(&[1.0; 4], &[1.0; 2], &[1.0; 2]), 0.5);
        p.ptr.b.data[0] = 3f64.ln();
        assert!((p.generation_probability(&[1.0; 4], &[1.0; 2], &[1.0; 2]) - 0.75).abs() < 1e-15);
    }
}
