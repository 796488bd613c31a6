//! Turning a scene into what the network consumes: per-microphone
//! magnitude spectra with encoder context, the reference spectrogram and
//! the compressed clean target.

use super::ModelConfig;
use crate::dsp::{Spectrogram, Stft};
use crate::error::{ensure, Result};
use crate::nn::Tensor;
use crate::scene::Scene;
use crate::Scalar;

/// Mirror index into `0..n` with reflection about the end samples.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Frames `-ctx .. frames + ctx` of `signal` (zero-extended to
/// `frames * hop` samples, then reflect-padded).
pub(crate) fn spectrum_with_context<T: Scalar>(
    stft: &Stft<T>,
    signal: &[T],
    frames: usize,
    ctx: usize,
    fs: u32,
) -> Spectrogram<T> {
    let cfg = stft.config();
    let ext_len = (frames * cfg.hop).max(signal.len());
    let lead = cfg.win_len / 2 + ctx * cfg.hop;
    let total = (frames + 2 * ctx - 1) * cfg.hop + cfg.win_len;
    let padded: Vec<T> = (0..total)
        .map(|j| {
            let i = reflect(j as isize - lead as isize, ext_len);
            signal.get(i).copied().unwrap_or_else(T::zero)
        })
        .collect();
    stft.analyze_padded(&padded, frames + 2 * ctx, fs)
}

/// Checks that `order` is a permutation of `0..mics` starting at the
/// reference microphone 0.
pub fn validate_mic_order(order: &[usize], mics: usize) -> Result<()> {
    ensure!(order.len() == mics, "mic order has {} entries for {mics} microphones", order.len());
    let mut seen = vec![false; mics];
    for &m in order {
        ensure!(m < mics && !seen[m], "mic order {order:?} is not a permutation");
        seen[m] = true;
    }
    ensure!(order[0] == 0, "mic order must start with the reference microphone 0");
    Ok(())
}

/// Everything derived from one scene for one forward pass.
pub struct SceneInput<T: Scalar> {
    pub len: usize,
    pub chunks: usize,
    pub frames: usize,
    pub sample_rate: u32,
    /// Reference-channel spectrogram over `frames` frames.
    pub reference: Spectrogram<T>,
    /// `|S|^alpha` of the clean target, bin-major `[bins, frames]`.
    pub target: Vec<T>,
    mixtures: Vec<Vec<T>>,
    /// Lazily computed encoder inputs, bin-major `[bins, frames + 2 ctx]`.
    encoder_in: Vec<Option<Vec<T>>>,
    ctx: usize,
    chunk_frames: usize,
    input_power: T,
}

impl<T: Scalar> SceneInput<T> {
    pub fn new(cfg: &ModelConfig, stft: &Stft<T>, scene: &Scene) -> Result<Self> {
        ensure!(scene.mics() >= 1, "scene has no microphones");
        ensure!(!scene.is_empty(), "scene is empty");
        ensure!(
            scene.mixtures.iter().all(|m| m.len() == scene.len()),
            "microphone signals differ in length"
        );
        let len = scene.len();
        let chunks = cfg.chunks_for(len);
        let frames = chunks * cfg.chunk_frames;
        let ctx = cfg.context_frames();
        let to_t = |x: &[f32]| x.iter().map(|&v| T::lit(v as f64)).collect::<Vec<T>>();
        let mixtures: Vec<Vec<T>> = scene.mixtures.iter().map(|m| to_t(m)).collect();
        let clean = to_t(&scene.clean);
        let alpha = T::lit(cfg.alpha);
        let target = spectrum_with_context(stft, &clean, frames, 0, scene.sample_rate)
            .magnitude()
            .into_iter()
            .map(|m| m.powf(alpha))
            .collect();
        let ext = spectrum_with_context(stft, &mixtures[0], frames, ctx, scene.sample_rate);
        let reference = ext.frame_slice(ctx, frames);
        let mut input = Self {
            len,
            chunks,
            frames,
            sample_rate: scene.sample_rate,
            reference,
            target,
            encoder_in: vec![None; mixtures.len()],
            mixtures,
            ctx,
            chunk_frames: cfg.chunk_frames,
            input_power: T::lit(cfg.input_power),
        };
        input.encoder_in[0] = Some(input.compress(ext.magnitude()));
        Ok(input)
    }

    pub fn mics(&self) -> usize {
        self.mixtures.len()
    }

    fn compress(&self, mut mag: Vec<T>) -> Vec<T> {
        if self.input_power != T::one() {
            mag.iter_mut().for_each(|v| *v = v.powf(self.input_power));
        }
        mag
    }

    /// Encoder input for chunk `t` of microphone `mic`:
    /// `[bins, chunk_frames + 2 ctx]`.
    pub fn chunk_input(&mut self, stft: &Stft<T>, mic: usize, t: usize) -> Tensor<T> {
        if self.encoder_in[mic].is_none() {
            let spec =
                spectrum_with_context(stft, &self.mixtures[mic], self.frames, self.ctx, self.sample_rate);
            self.encoder_in[mic] = Some(self.compress(spec.magnitude()));
        }
        let all = self.encoder_in[mic].as_ref().unwrap();
        let width = self.frames + 2 * self.ctx;
        let cols = self.chunk_frames + 2 * self.ctx;
        let bins = self.reference.bins;
        let start = t * self.chunk_frames;
        let mut data = Vec::with_capacity(bins * cols);
        for f in 0..bins {
            data.extend_from_slice(&all[f * width + start..f * width + start + cols]);
        }
        Tensor::new(vec![bins, cols], data)
    }

    /// Reference spectrogram and target of chunk `t`, bin-major.
    pub fn chunk_reference(&self, t: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
        let c = self.chunk_frames;
        let spec = self.reference.frame_slice(t * c, c);
        let frames = self.frames;
        let mut target = Vec::with_capacity(spec.bins * c);
        for f in 0..spec.bins {
            target.extend_from_slice(&self.target[f * frames + t * c..f * frames + (t + 1) * c]);
        }
        (spec.re, spec.im, target)
    }
}
