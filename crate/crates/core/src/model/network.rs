use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::features::{validate_mic_order, SceneInput};
use super::halting::{fixed_k_state, HaltState, Halting, Step};
use super::ModelConfig;
use crate::dsp::{Spectrogram, Stft};
use crate::error::{ensure, Error, Result};
use crate::nn::{AttentionBlock, Conv1d, Dense, Dropout, Grads, Graph, Padding, ParamStore, Tensor, Var};
use crate::scene::Scene;
use crate::Scalar;

/// Whether a forward pass applies dropout.
pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

#[derive(Clone, Debug)]
struct Layers {
    encoder: Vec<Conv1d>,
    embed: Dense,
    attention: AttentionBlock,
    score_hidden: Dense,
    score_out: Dense,
    decoder: Vec<Conv1d>,
}

impl Layers {
    fn build<T: Scalar, R: Rng + ?Sized>(cfg: &ModelConfig, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        let bins = cfg.bins();
        let mut encoder = Vec::with_capacity(cfg.encoder_layers);
        for i in 0..cfg.encoder_layers {
            let c_in = if i == 0 { bins } else { cfg.filters };
            encoder.push(Conv1d::new(store, &format!("encoder.conv{i}"), c_in, cfg.filters, cfg.kernel, rng));
        }
        let embed = Dense::new(store, "encoder.embed", cfg.filters, cfg.d, rng);
        let attention = AttentionBlock::new(store, "attention", cfg.d, cfg.heads, cfg.d_ff(), rng)?;
        let score_hidden = Dense::new(store, "score.hidden", cfg.d, cfg.d, rng);
        let score_out = Dense::new(store, "score.out", cfg.d, 1, rng);
        store.get_mut(score_out.bias).data.fill(T::lit(cfg.score_bias_init));
        let mut decoder = Vec::with_capacity(cfg.decoder_layers);
        for i in 0..cfg.decoder_layers {
            let c_in = if i == 0 { cfg.d } else { cfg.filters };
            let c_out = if i + 1 == cfg.decoder_layers { 2 * bins } else { cfg.filters };
            decoder.push(Conv1d::new(store, &format!("decoder.conv{i}"), c_in, c_out, cfg.kernel, rng));
        }
        Ok(Self {
            encoder,
            embed,
            attention,
            score_hidden,
            score_out,
            decoder,
        })
    }
}

/// Losses of one forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Losses {
    pub speech: f64,
    pub request: f64,
    pub total: f64,
}

/// Result of running the network on a scene.
#[derive(Clone, Debug)]
pub struct ForwardResult<T> {
    /// Enhanced reference channel, as long as the scene.
    pub s_hat: Vec<T>,
    /// Mean chunk cost.
    pub p: f64,
    pub per_chunk: Vec<HaltState>,
    pub losses: Losses,
}

impl<T> ForwardResult<T> {
    pub fn requested(&self) -> Vec<usize> {
        self.per_chunk.iter().map(|h| h.n).collect()
    }

    pub fn mean_n(&self) -> f64 {
        self.per_chunk.iter().map(|h| h.n as f64).sum::<f64>() / self.per_chunk.len() as f64
    }
}

/// Graph handles of one built pass.
struct Pass {
    total: Var,
    speech: Var,
    request: Var,
    masks: Vec<(Var, Var)>,
    chunks: Vec<HaltState>,
}

/// The full enhancement network: per-microphone encoder, attention over
/// the requested microphones, halting score head and mask decoder.
#[derive(Clone)]
pub struct Network<T: Scalar> {
    config: ModelConfig,
    params: ParamStore<T>,
    layers: Layers,
    stft: Stft<T>,
}

impl<T: Scalar> Network<T> {
    /// Freshly initialised network; `seed` fixes every initial weight.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let layers = Layers::build(&config, &mut params, &mut rng)?;
        let stft = Stft::new(config.stft)?;
        Ok(Self {
            config,
            params,
            layers,
            stft,
        })
    }

    /// Network with `params` in place of the initial weights. Names and
    /// shapes must match the architecture of `config` exactly.
    pub fn from_params(config: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        ensure!(
            params.len() == net.params.len(),
            "checkpoint has {} tensors, architecture expects {}",
            params.len(),
            net.params.len()
        );
        for ((_, want, wt), (_, got, gt)) in net.params.iter().zip(params.iter()) {
            ensure!(
                want == got && wt.shape == gt.shape,
                "checkpoint tensor {got} {:?} does not match {want} {:?}",
                gt.shape,
                wt.shape
            );
        }
        net.params = params;
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    /// Same weights, different request penalty.
    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.config.lambda = lambda;
        self.config.validate()?;
        Ok(self)
    }

    pub fn stft(&self) -> &Stft<T> {
        &self.stft
    }

    pub fn prepare(&self, scene: &Scene) -> Result<SceneInput<T>> {
        SceneInput::new(&self.config, &self.stft, scene)
    }

    /// Encoder: `E` valid convolutions over the chunk plus context, ReLU
    /// after each, mean over frames, dense projection to `d`.
    pub fn encode(&self, g: &mut Graph<'_, T>, input: Tensor<T>) -> Result<Var> {
        let (bins, cols) = input.dims2();
        ensure!(bins == self.config.bins(), "encoder input has {bins} bins, expected {}", self.config.bins());
        let need = self.config.chunk_frames + 2 * self.config.context_frames();
        ensure!(cols == need, "encoder input has {cols} frames, expected {need}");
        let mut x = g.constant(input);
        for conv in &self.layers.encoder {
            x = conv.forward(g, x, Padding::Valid)?;
            x = g.relu(x);
        }
        let pooled = g.mean_cols(x);
        self.layers.embed.forward(g, pooled)
    }

    /// Attention of the last feature row over all of `z` (rows `[1, d]`).
    pub fn attention_aggregate<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        z: &[Var],
        dropout: &mut Dropout<'_, R>,
    ) -> Result<Var> {
        ensure!(!z.is_empty(), "attention needs at least one microphone");
        self.layers.attention.forward(g, z, dropout)
    }

    /// Halting score in `(0, 1)`, shape `[1, 1]`.
    pub fn score(&self, g: &mut Graph<'_, T>, h: Var) -> Result<Var> {
        let x = self.layers.score_hidden.forward(g, h)?;
        let x = g.relu(x);
        let x = self.layers.score_out.forward(g, x)?;
        Ok(g.sigmoid(x))
    }

    /// Mask decoder: `h` broadcast over the chunk's frames, `D` same-padded
    /// convolutions, sigmoid. Returns `(M_r, M_i)`, each `[bins, C]`.
    pub fn decode(&self, g: &mut Graph<'_, T>, h: Var) -> Result<(Var, Var)> {
        let mut x = g.repeat_cols(h, self.config.chunk_frames);
        let last = self.layers.decoder.len() - 1;
        for (i, conv) in self.layers.decoder.iter().enumerate() {
            x = conv.forward(g, x, Padding::Same)?;
            if i < last {
                x = g.relu(x);
            }
        }
        let m = g.sigmoid(x);
        let bins = self.config.bins();
        Ok((g.slice_rows(m, 0, bins)?, g.slice_rows(m, bins, bins)?))
    }

    /// Request loop for chunk `t`: returns the aggregated state `h_t`, the
    /// chunk cost `p_t` as a graph value and the halting record.
    pub fn request_loop<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        input: &mut SceneInput<T>,
        order: &[usize],
        t: usize,
        dropout: &mut Dropout<'_, R>,
    ) -> Result<(Var, Var, HaltState)> {
        let block = &self.layers.attention;
        let mut keys = Vec::new();
        let mut values = Vec::new();
        let mut step = |g: &mut Graph<'_, T>, input: &mut SceneInput<T>, mic: usize, dropout: &mut Dropout<'_, R>| {
            let z = self.encode(g, input.chunk_input(&self.stft, mic, t))?;
            keys.push(block.key.forward(g, z)?);
            values.push(block.value.forward(g, z)?);
            let k = g.stack_rows(&keys)?;
            let v = g.stack_rows(&values)?;
            block.forward_projected(g, z, k, v, dropout)
        };

        if let Some(k) = self.config.fixed_k {
            let k = k.min(order.len());
            let w = T::one() / T::lit(k as f64);
            let mut terms = Vec::with_capacity(k);
            for &mic in &order[..k] {
                let h = step(g, input, mic, dropout)?;
                terms.push(g.affine(h, w, T::zero()));
            }
            let h_t = g.add_n(&terms)?;
            let state = fixed_k_state(k);
            let p = g.scalar(T::lit(state.p));
            return Ok((h_t, p, state));
        }

        let mut halting = Halting::new(order.len(), self.config.eps);
        let mut r = g.scalar(T::one());
        let mut terms = Vec::with_capacity(order.len());
        for &mic in order {
            let h = step(g, input, mic, dropout)?;
            let (s_val, s_var) = if halting.next_is_forced() {
                (1.0, None)
            } else {
                let s = self.score(g, h)?;
                (g.scalar_value(s).to_f64_lossy(), Some(s))
            };
            match halting.push(s_val) {
                Step::Continue => {
                    let s = s_var.expect("forced score always halts");
                    terms.push(g.scale_by(h, s)?);
                    r = g.sub(r, s)?;
                }
                Step::Halt => {
                    terms.push(g.scale_by(h, r)?);
                    let state = halting.finish();
                    let p = g.affine(r, T::one(), T::lit(state.n as f64));
                    let h_t = g.add_n(&terms)?;
                    return Ok((h_t, p, state));
                }
            }
        }
        Err(Error::invalid("request loop ended without halting"))
    }

    fn build<R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'_, T>,
        input: &mut SceneInput<T>,
        order: &[usize],
        dropout: &mut Dropout<'_, R>,
    ) -> Result<Pass> {
        validate_mic_order(order, input.mics())?;
        let mut speech_terms = Vec::with_capacity(input.chunks);
        let mut costs = Vec::with_capacity(input.chunks);
        let mut masks = Vec::with_capacity(input.chunks);
        let mut chunks = Vec::with_capacity(input.chunks);
        let alpha = T::lit(self.config.alpha);
        for t in 0..input.chunks {
            let (h_t, p_t, state) = self.request_loop(g, input, order, t, dropout)?;
            let (mr, mi) = self.decode(g, h_t)?;
            let (re, im, target) = input.chunk_reference(t);
            speech_terms.push(g.compressed_l1(mr, mi, re, im, &target, alpha)?);
            costs.push(p_t);
            masks.push((mr, mi));
            chunks.push(state);
        }
        let speech_sum = g.add_n(&speech_terms)?;
        let cells = T::lit((self.config.bins() * input.frames) as f64);
        let speech = g.affine(speech_sum, T::one() / cells, T::zero());
        let cost_sum = g.add_n(&costs)?;
        let request = g.affine(cost_sum, T::one() / T::lit(input.chunks as f64), T::zero());
        let penalty = g.affine(request, T::lit(self.config.lambda), T::zero());
        let total = g.add(speech, penalty)?;
        Ok(Pass {
            total,
            speech,
            request,
            masks,
            chunks,
        })
    }

    fn losses(g: &Graph<'_, T>, pass: &Pass) -> Losses {
        Losses {
            speech: g.scalar_value(pass.speech).to_f64_lossy(),
            request: g.scalar_value(pass.request).to_f64_lossy(),
            total: g.scalar_value(pass.total).to_f64_lossy(),
        }
    }

    fn dropout<'r>(&self, mode: Mode<'r>) -> Dropout<'r, ChaCha8Rng> {
        match mode {
            Mode::Eval => Dropout::Eval,
            Mode::Train(rng) => Dropout::Train {
                rate: self.config.dropout,
                rng,
            },
        }
    }

    /// Full forward pass: every chunk's request loop and masks, the
    /// reconstructed estimate and the losses.
    pub fn forward(&self, scene: &Scene, order: &[usize], mode: Mode<'_>) -> Result<ForwardResult<T>> {
        let mut input = self.prepare(scene)?;
        let mut g = Graph::new(&self.params);
        let mut dropout = self.dropout(mode);
        let pass = self.build(&mut g, &mut input, order, &mut dropout)?;
        let losses = Self::losses(&g, &pass);
        let s_hat = self.reconstruct(&g, &input, &pass.masks)?;
        let p = pass.chunks.iter().map(|h| h.p).sum::<f64>() / pass.chunks.len() as f64;
        Ok(ForwardResult {
            s_hat,
            p,
            per_chunk: pass.chunks,
            losses,
        })
    }

    /// Losses, halting records and parameter gradients of the total loss.
    pub fn loss_and_grads(
        &self,
        scene: &Scene,
        order: &[usize],
        mode: Mode<'_>,
    ) -> Result<(Losses, Vec<HaltState>, Grads<T>)> {
        let mut input = self.prepare(scene)?;
        let mut g = Graph::new(&self.params);
        let mut dropout = self.dropout(mode);
        let pass = self.build(&mut g, &mut input, order, &mut dropout)?;
        let grads = g.backward(pass.total)?;
        Ok((Self::losses(&g, &pass), pass.chunks, grads))
    }

    fn reconstruct(&self, g: &Graph<'_, T>, input: &SceneInput<T>, masks: &[(Var, Var)]) -> Result<Vec<T>> {
        let reference = &input.reference;
        let (bins, frames, c) = (reference.bins, reference.frames, self.config.chunk_frames);
        let mut est = Spectrogram {
            re: vec![T::zero(); bins * frames],
            im: vec![T::zero(); bins * frames],
            ..reference.clone()
        };
        for (t, &(mr, mi)) in masks.iter().enumerate() {
            let (mr, mi) = (g.data(mr), g.data(mi));
            for f in 0..bins {
                for j in 0..c {
                    let idx = f * frames + t * c + j;
                    est.re[idx] = mr[f * c + j] * reference.re[idx];
                    est.im[idx] = mi[f * c + j] * reference.im[idx];
                }
            }
        }
        self.stft.synthesize(&est, input.len)
    }
}

/// Microphone order for one scene: the reference microphone first, the
/// rest in uniformly random order.
pub fn random_mic_order<R: Rng + ?Sized>(mics: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..mics).collect();
    if mics > 1 {
        order[1..].shuffle(rng);
    }
    order
}
