//! Short-time objective intelligibility (classic definition): one-third
//! octave envelopes of clean and processed speech, compared by clipped
//! correlations over 384 ms segments.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::resample::resample_16k_to_10k;
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoiConfig {
    pub target_fs: u32,
    pub frame: usize,
    pub fft: usize,
    pub bands: usize,
    pub lowest_center_hz: f64,
    /// Frames per segment.
    pub segment: usize,
    /// Clipping bound in dB (signal-to-distortion).
    pub clip_beta_db: f64,
    /// Frames more than this far below the loudest clean frame are dropped.
    pub silence_db: f64,
}

impl Default for StoiConfig {
    fn default() -> Self {
        Self {
            target_fs: 10_000,
            frame: 256,
            fft: 512,
            bands: 15,
            lowest_center_hz: 150.0,
            segment: 30,
            clip_beta_db: -15.0,
            silence_db: 40.0,
        }
    }
}

/// Symmetric Hann window without its zero end points.
fn stoi_window(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / (n + 1) as f64).cos())
        .collect()
}

/// `(first, last)` FFT bins (half open) of each one-third octave band.
fn band_bins(cfg: &StoiConfig) -> Vec<(usize, usize)> {
    let bins = cfg.fft / 2 + 1;
    let freqs: Vec<f64> = (0..bins).map(|k| k as f64 * cfg.target_fs as f64 / cfg.fft as f64).collect();
    let nearest = |f: f64| {
        (0..bins)
            .min_by(|&a, &b| (freqs[a] - f).abs().total_cmp(&(freqs[b] - f).abs()))
            .unwrap()
    };
    (0..cfg.bands)
        .map(|k| {
            let cf = cfg.lowest_center_hz * 2f64.powf(k as f64 / 3.0);
            let lo = cf * 2f64.powf(-1.0 / 6.0);
            let hi = cf * 2f64.powf(1.0 / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

fn frame_starts(len: usize, frame: usize, hop: usize) -> Vec<usize> {
    if len < frame {
        return Vec::new();
    }
    (0..=(len - frame) / hop).map(|i| i * hop).collect()
}

/// Drops frames of both signals whose clean energy is more than `range`
/// dB below the loudest clean frame, then re-synthesizes by overlap-add.
fn remove_silent_frames(x: &[f64], y: &[f64], cfg: &StoiConfig) -> (Vec<f64>, Vec<f64>) {
    let w = stoi_window(cfg.frame);
    let hop = cfg.frame / 2;
    let starts = frame_starts(x.len(), cfg.frame, hop);
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..cfg.frame).map(|i| (x[s + i] * w[i]).powi(2)).sum();
            20.0 * (e.sqrt() + f64::EPSILON).log10()
        })
        .collect();
    let peak = energy.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| e > peak - cfg.silence_db)
        .map(|(&s, _)| s)
        .collect();
    if keep.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (keep.len() - 1) * hop + cfg.frame;
    let mut xo = vec![0.0; out_len];
    let mut yo = vec![0.0; out_len];
    for (j, &s) in keep.iter().enumerate() {
        for i in 0..cfg.frame {
            xo[j * hop + i] += x[s + i] * w[i];
            yo[j * hop + i] += y[s + i] * w[i];
        }
    }
    (xo, yo)
}

/// One-third octave band envelopes, `[bands][frames]`.
fn band_envelopes(x: &[f64], cfg: &StoiConfig, bands: &[(usize, usize)]) -> Vec<Vec<f64>> {
    let w = stoi_window(cfg.frame);
    let hop = cfg.frame / 2;
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft);
    let starts = frame_starts(x.len(), cfg.frame, hop);
    let mut env = vec![Vec::with_capacity(starts.len()); bands.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft];
    for &s in &starts {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..cfg.frame {
            buf[i] = Complex::new(x[s + i] * w[i], 0.0);
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let e: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            env[b].push(e.sqrt());
        }
    }
    env
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        da += (x - ma) * (x - ma);
        db += (y - mb) * (y - mb);
    }
    let den = (da.sqrt() * db.sqrt()).max(f64::EPSILON);
    num / den
}

/// STOI of `estimate` against `clean`, both at 16 kHz.
pub fn stoi(clean: &[f64], estimate: &[f64]) -> Result<f64> {
    stoi_with(clean, estimate, &StoiConfig::default())
}

pub fn stoi_with(clean: &[f64], estimate: &[f64], cfg: &StoiConfig) -> Result<f64> {
    ensure!(
        clean.len() == estimate.len(),
        "signals differ in length: {} vs {}",
        clean.len(),
        estimate.len()
    );
    ensure!(clean.iter().any(|&v| v != 0.0), "clean signal is silent");
    let x = resample_16k_to_10k(clean);
    let y = resample_16k_to_10k(estimate);
    let (x, y) = remove_silent_frames(&x, &y, cfg);
    let bands = band_bins(cfg);
    let xe = band_envelopes(&x, cfg, &bands);
    let ye = band_envelopes(&y, cfg, &bands);
    let frames = xe.first().map_or(0, Vec::len);
    ensure!(
        frames >= cfg.segment,
        "only {frames} non-silent frames; at least {} are needed",
        cfg.segment
    );
    let clip = 1.0 + 10f64.powf(-cfg.clip_beta_db / 20.0);
    let n = cfg.segment;
    let mut total = 0.0;
    let mut count = 0usize;
    for m in n..=frames {
        for (xb, yb) in xe.iter().zip(&ye) {
            let xs = &xb[m - n..m];
            let ys = &yb[m - n..m];
            let nx = xs.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = ys.iter().map(|v| v * v).sum::<f64>().sqrt();
            let g = nx / ny.max(f64::EPSILON);
            let yc: Vec<f64> = ys.iter().zip(xs).map(|(&yv, &xv)| (yv * g).min(xv * clip)).collect();
            total += correlation(xs, &yc);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::synth::speech_like;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn speech(seed: u64) -> Vec<f64> {
        speech_like(2.0, 16000, seed).unwrap().samples
    }

    #[test]
    fn identity_scores_one() {
        let x = speech(1);
        assert!((stoi(&x, &x).unwrap() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn positive_scaling_is_ignored() {
        let x = speech(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y: Vec<f64> = x
            .iter()
            .map(|v| v + 0.3 * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let base = stoi(&x, &y).unwrap();
        for a in [0.01, 0.5, 3.0, 100.0] {
            let ya: Vec<f64> = y.iter().map(|v| v * a).collect();
            assert!((stoi(&x, &ya).unwrap() - base).abs() < 1e-6);
        }
    }

    #[test]
    fn silent_clean_is_rejected() {
        assert!(stoi(&[0.0; 32000], &[0.1; 32000]).is_err());
        assert!(stoi(&[0.1; 100], &[0.1; 99]).is_err());
    }

    #[test]
    fn bands_cover_expected_range() {
        let b = band_bins(&StoiConfig::default());
        assert_eq!(b.len(), 15);
        // 150 Hz band starts near bin 7 (136 Hz) at 19.5 Hz per bin
        assert_eq!(b[0].0, 7);
        assert!(b.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(b[14].1 <= 257);
    }
}
