use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::hann_window;
use crate::error::{ensure, Result};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            win_len: 512,
            hop: 128,
            window: WindowKind::Hann,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.win_len / 2 + 1
    }

    /// Frame count for a signal of `len` samples: frames are centred on
    /// `t * hop`, so there are `ceil(len / hop)` of them.
    pub fn frames_for(&self, len: usize) -> usize {
        len.max(1).div_ceil(self.hop)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.win_len >= 2, "win_len must be at least 2");
        ensure!(self.win_len % 2 == 0, "win_len must be even");
        ensure!(
            self.hop > 0 && self.hop <= self.win_len,
            "hop must be in 1..=win_len"
        );
        Ok(())
    }
}

/// Complex STFT stored bin-major: `re[f * frames + t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
    pub bins: usize,
    pub frames: usize,
    pub sample_rate: u32,
    pub win_len: usize,
    pub hop: usize,
}

impl<T: Scalar> Spectrogram<T> {
    pub fn zeros(bins: usize, frames: usize, sample_rate: u32, cfg: &StftConfig) -> Self {
        Self {
            re: vec![T::zero(); bins * frames],
            im: vec![T::zero(); bins * frames],
            bins,
            frames,
            sample_rate,
            win_len: cfg.win_len,
            hop: cfg.hop,
        }
    }

    pub fn magnitude(&self) -> Vec<T> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(&r, &i)| (r * r + i * i).sqrt())
            .collect()
    }

    /// Copy of frames `start..start + len` (all bins).
    pub fn frame_slice(&self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.frames);
        let mut out = Self::zeros(self.bins, len, self.sample_rate, &self.config());
        for f in 0..self.bins {
            let src = f * self.frames + start;
            out.re[f * len..(f + 1) * len].copy_from_slice(&self.re[src..src + len]);
            out.im[f * len..(f + 1) * len].copy_from_slice(&self.im[src..src + len]);
        }
        out
    }

    pub fn scale(&mut self, g: T) {
        self.re.iter_mut().chain(self.im.iter_mut()).for_each(|v| *v *= g);
    }

    fn config(&self) -> StftConfig {
        StftConfig {
            win_len: self.win_len,
            hop: self.hop,
            window: WindowKind::Hann,
        }
    }
}

/// Reusable analysis/synthesis engine holding the FFT plans and window.
///
/// Framing reflect-pads `win_len / 2` samples on both ends, so frame `t`
/// is centred on sample `t * hop`. The forward transform is unnormalized
/// and the inverse is scaled by `1 / win_len`.
#[derive(Clone)]
pub struct Stft<T: Scalar> {
    cfg: StftConfig,
    window: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Scalar> Stft<T> {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: hann_window(cfg.win_len)?,
            forward: planner.plan_fft_forward(cfg.win_len),
            inverse: planner.plan_fft_inverse(cfg.win_len),
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    /// Signal padded with `win_len / 2` reflected samples on both sides.
    /// Signals shorter than `win_len` are first zero-padded to `win_len`.
    pub fn pad(&self, signal: &[T]) -> Vec<T> {
        let half = self.cfg.win_len / 2;
        let mut base = signal.to_vec();
        if base.len() < self.cfg.win_len {
            base.resize(self.cfg.win_len, T::zero());
        }
        let n = base.len();
        let mut out = Vec::with_capacity(n + 2 * half);
        out.extend((1..=half).rev().map(|i| base[i]));
        out.extend_from_slice(&base);
        out.extend((0..half).map(|i| base[n - 2 - i]));
        out
    }

    pub fn analyze(&self, signal: &[T], sample_rate: u32) -> Spectrogram<T> {
        let frames = self.cfg.frames_for(signal.len().max(self.cfg.win_len));
        let padded = self.pad(signal);
        self.analyze_padded(&padded, frames, sample_rate)
    }

    /// Frames taken directly from an already padded buffer: frame `t`
    /// covers `padded[t * hop .. t * hop + win_len]`.
    pub fn analyze_padded(&self, padded: &[T], frames: usize, sample_rate: u32) -> Spectrogram<T> {
        let n = self.cfg.win_len;
        let bins = self.cfg.bins();
        let mut spec = Spectrogram::zeros(bins, frames, sample_rate, &self.cfg);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch =
            vec![Complex::new(T::zero(), T::zero()); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * self.cfg.hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let x = padded.get(start + i).copied().unwrap_or_else(T::zero);
                *slot = Complex::new(x * self.window[i], T::zero());
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for f in 0..bins {
                spec.re[f * frames + t] = buf[f].re;
                spec.im[f * frames + t] = buf[f].im;
            }
        }
        spec
    }

    /// Overlap-add synthesis normalized by the summed squared window;
    /// returns `len` samples starting at the first frame centre.
    pub fn synthesize(&self, spec: &Spectrogram<T>, len: usize) -> Result<Vec<T>> {
        ensure!(
            spec.win_len == self.cfg.win_len && spec.hop == self.cfg.hop,
            "spectrogram was computed with win_len {} hop {}, synthesis uses {} / {}",
            spec.win_len,
            spec.hop,
            self.cfg.win_len,
            self.cfg.hop
        );
        ensure!(
            spec.bins == self.cfg.bins(),
            "spectrogram has {} bins, expected {}",
            spec.bins,
            self.cfg.bins()
        );
        let n = self.cfg.win_len;
        let half = n / 2;
        let hop = self.cfg.hop;
        let frames = spec.frames;
        let total = (frames.saturating_sub(1)) * hop + n;
        let mut acc = vec![T::zero(); total.max(len + half)];
        let mut wsum = vec![T::zero(); acc.len()];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
        let mut scratch =
            vec![Complex::new(T::zero(), T::zero()); self.inverse.get_inplace_scratch_len()];
        let inv_n = T::one() / T::lit(n as f64);
        for t in 0..frames {
            for f in 0..spec.bins {
                buf[f] = Complex::new(spec.re[f * frames + t], spec.im[f * frames + t]);
            }
            // Hermitian completion; DC and Nyquist imaginary parts are dropped.
            buf[0].im = T::zero();
            buf[half].im = T::zero();
            for f in 1..half {
                buf[n - f] = buf[f].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * hop;
            for i in 0..n {
                let w = self.window[i];
                acc[start + i] += buf[i].re * inv_n * w;
                wsum[start + i] += w * w;
            }
        }
        let tiny = T::lit(1e-10);
        Ok((0..len)
            .map(|i| {
                let j = i + half;
                if j < acc.len() && wsum[j] > tiny {
                    acc[j] / wsum[j]
                } else {
                    T::zero()
                }
            })
            .collect())
    }
}

pub fn stft<T: Scalar>(signal: &[T], cfg: &StftConfig, sample_rate: u32) -> Result<Spectrogram<T>> {
    Ok(Stft::new(*cfg)?.analyze(signal, sample_rate))
}

/// Inverse of [`stft`]; `len` is the length of the original signal.
pub fn istft<T: Scalar>(spec: &Spectrogram<T>, cfg: &StftConfig, len: usize) -> Result<Vec<T>> {
    Stft::new(*cfg)?.synthesize(spec, len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn frame_count_by_stepping() {
        let cfg = StftConfig::default();
        for len in [512usize, 1000, 1024, 32000, 32001] {
            let mut count = 0;
            let mut centre = 0;
            while centre < len {
                count += 1;
                centre += cfg.hop;
            }
            assert_eq!(cfg.frames_for(len), count);
        }
        // Uncentred framing without padding would give this many frames.
        assert_eq!((32000 - 512) / 128 + 1, 247);
        assert_eq!(cfg.frames_for(32000), 250);
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let spec = stft(&vec![0.0f64; 32000], &StftConfig::default(), 16000).unwrap();
        assert_eq!(spec.bins, 257);
        assert!(spec.re.iter().chain(&spec.im).all(|&v| v == 0.0));
        let back = istft(&spec, &StftConfig::default(), 32000).unwrap();
        assert!(back.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centred_cosine_concentrates_energy() {
        let cfg = StftConfig::default();
        let k = 37;
        let x: Vec<f64> = (0..8000)
            .map(|n| (std::f64::consts::TAU * k as f64 * n as f64 / 512.0).cos())
            .collect();
        let spec = stft(&x, &cfg, 16000).unwrap();
        let w: Vec<f64> = hann_window(512).unwrap();
        // interior frame; compare against a direct DFT of the windowed frame
        let t = 20;
        let frame: Vec<f64> = (0..512).map(|i| x[t * 128 - 256 + i] * w[i]).collect();
        let mut energy = vec![0.0; 257];
        for (f, e) in energy.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, v) in frame.iter().enumerate() {
                let ph = -std::f64::consts::TAU * (f * n) as f64 / 512.0;
                re += v * ph.cos();
                im += v * ph.sin();
            }
            assert!((re - spec.re[f * spec.frames + t]).abs() < 1e-8);
            assert!((im - spec.im[f * spec.frames + t]).abs() < 1e-8);
            *e = re * re + im * im;
        }
        let total: f64 = energy.iter().sum();
        // Hann main lobe spans k-1..=k+1; the spec's "bin k" includes its lobe.
        let lobe = energy[k - 1] + energy[k] + energy[k + 1];
        assert!(lobe / total > 0.99);
        let peak = (0..257).max_by(|&a, &b| energy[a].total_cmp(&energy[b])).unwrap();
        assert_eq!(peak, k);
    }

    #[test]
    fn round_trip_interior() {
        let cfg = StftConfig::default();
        let engine = Stft::new(cfg).unwrap();
        for seed in 0..5 {
            let x = noise(32000, seed);
            let spec = engine.analyze(&x, 16000);
            let y = engine.synthesize(&spec, x.len()).unwrap();
            let (mut err, mut norm) = (0.0, 0.0);
            for i in 256..x.len() - 256 {
                err += (x[i] - y[i]).powi(2);
                norm += x[i] * x[i];
            }
            assert!((err / norm).sqrt() < 1e-12);
        }
    }

    #[test]
    fn synthesis_is_linear() {
        let cfg = StftConfig::default();
        let mut spec = stft(&noise(4000, 3), &cfg, 16000).unwrap();
        let y1 = istft(&spec, &cfg, 4000).unwrap();
        spec.scale(2.0);
        let y2 = istft(&spec, &cfg, 4000).unwrap();
        for (a, b) in y1.iter().zip(&y2) {
            assert!((2.0 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn analysis_is_linear() {
        let cfg = StftConfig::default();
        let (x, y) = (noise(3000, 1), noise(3000, 2));
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (sx, sy, sm) = (
            stft(&x, &cfg, 16000).unwrap(),
            stft(&y, &cfg, 16000).unwrap(),
            stft(&mix, &cfg, 16000).unwrap(),
        );
        for i in 0..sm.re.len() {
            assert!((sm.re[i] - (a * sx.re[i] + b * sy.re[i])).abs() < 1e-9);
            assert!((sm.im[i] - (a * sx.im[i] + b * sy.im[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let engine = Stft::<f64>::new(cfg).unwrap();
        let x = noise(6000, 9);
        let padded = engine.pad(&x);
        let spec = engine.analyze(&x, 16000);
        for t in 0..spec.frames {
            let time: f64 = (0..512)
                .map(|i| (padded.get(t * 128 + i).copied().unwrap_or(0.0) * engine.window()[i]).powi(2))
                .sum();
            let mut freq = 0.0;
            for f in 0..257 {
                let e = spec.re[f * spec.frames + t].powi(2) + spec.im[f * spec.frames + t].powi(2);
                freq += if f == 0 || f == 256 { e } else { 2.0 * e };
            }
            freq /= 512.0;
            assert!((time - freq).abs() <= 1e-6 * time.max(1e-30));
        }
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let spec = stft(&noise(2000, 4), &StftConfig::default(), 16000).unwrap();
        let other = StftConfig {
            hop: 256,
            ..StftConfig::default()
        };
        assert!(istft(&spec, &other, 2000).is_err());
    }

    #[test]
    fn short_signals_are_zero_padded() {
        let spec = stft(&noise(100, 5), &StftConfig::default(), 16000).unwrap();
        assert_eq!(spec.frames, 4);
    }
}
