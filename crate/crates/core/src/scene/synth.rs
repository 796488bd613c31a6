//! Synthetic speech-like and noise sources standing in for a speech corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::render::SourceKind;
use crate::dsp::mean_power;
use crate::error::{ensure, Result};

/// Speech-like signal and the fundamental frequency used at each sample.
pub struct SpeechLike {
    pub samples: Vec<f64>,
    pub pitch_hz: Vec<f64>,
    /// Syllabic envelope; zero during pauses.
    pub envelope: Vec<f64>,
}

/// Harmonic series with a wandering pitch, formant-shaped harmonic
/// amplitudes, a 4 Hz syllabic envelope and random pauses.
pub fn speech_like(duration_s: f64, fs: u32, seed: u64) -> Result<SpeechLike> {
    ensure!(duration_s > 0.0, "duration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fsf = fs as f64;
    let n = (duration_s * fsf).round() as usize;
    let base = rng.random_range(90.0..220.0);
    let vibrato_rate = rng.random_range(0.3..1.5);
    let vibrato_phase = rng.random_range(0.0..std::f64::consts::TAU);
    let syllable_rate = 4.0;
    let syllable = (fsf / syllable_rate) as usize;
    let n_syll = n.div_ceil(syllable);
    // per-syllable pitch offset, voicing and formants
    let syllables: Vec<(f64, bool, [f64; 3])> = (0..n_syll)
        .map(|_| {
            (
                rng.random_range(-0.12..0.12),
                rng.random::<f64>() >= 0.2,
                [
                    rng.random_range(300.0..850.0),
                    rng.random_range(900.0..2300.0),
                    rng.random_range(2400.0..3200.0),
                ],
            )
        })
        .collect();
    let nyquist_guard = 0.45 * fsf;
    let mut samples = vec![0.0; n];
    let mut pitch_hz = vec![0.0; n];
    let mut envelope = vec![0.0; n];
    let mut phase = 0.0;
    for i in 0..n {
        let t = i as f64 / fsf;
        let s = i / syllable;
        let (offset, voiced, formants) = syllables[s];
        let f0 = base
            * (1.0 + offset + 0.05 * (std::f64::consts::TAU * vibrato_rate * t + vibrato_phase).sin());
        pitch_hz[i] = f0;
        phase += std::f64::consts::TAU * f0 / fsf;
        let pos = (i % syllable) as f64 / syllable as f64;
        let env = if voiced {
            0.5 - 0.5 * (std::f64::consts::TAU * pos).cos()
        } else {
            0.0
        };
        envelope[i] = env;
        if env == 0.0 {
            continue;
        }
        let mut v = 0.0;
        let mut h = 1;
        while h as f64 * f0 < nyquist_guard.min(5000.0) {
            let f = h as f64 * f0;
            let shape: f64 = formants
                .iter()
                .map(|&fc| (-((f - fc) / 180.0).powi(2)).exp())
                .sum();
            let amp = (0.3 + 2.0 * shape) / (h as f64).powf(0.7);
            v += amp * (h as f64 * phase).sin();
            h += 1;
        }
        samples[i] = env * v;
    }
    normalize_rms(&mut samples);
    Ok(SpeechLike {
        samples,
        pitch_hz,
        envelope,
    })
}

/// Pink (1/f power) noise coloured by a random peaking biquad.
pub fn pink_noise(duration_s: f64, fs: u32, seed: u64) -> Result<Vec<f64>> {
    ensure!(duration_s > 0.0, "duration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * fs as f64).round() as usize;
    let size = n.next_power_of_two().max(2);
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(size - k).max(1) as f64;
        *c /= bin.sqrt();
    }
    buf[0] = Complex::new(0.0, 0.0);
    planner.plan_fft_inverse(size).process(&mut buf);
    let mut x: Vec<f64> = buf[..n].iter().map(|c| c.re).collect();

    // peaking EQ (RBJ cookbook)
    let f0 = rng.random_range(200.0..4000.0);
    let q = rng.random_range(0.5..2.0);
    let gain_db: f64 = rng.random_range(-10.0..10.0);
    let a = 10f64.powf(gain_db / 40.0);
    let w0 = std::f64::consts::TAU * f0 / fs as f64;
    let alpha = w0.sin() / (2.0 * q);
    let (b0, b1, b2) = (1.0 + alpha * a, -2.0 * w0.cos(), 1.0 - alpha * a);
    let (a0, a1, a2) = (1.0 + alpha / a, -2.0 * w0.cos(), 1.0 - alpha / a);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in x.iter_mut() {
        let y = (b0 * *v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2) / a0;
        x2 = x1;
        x1 = *v;
        y2 = y1;
        y1 = y;
        *v = y;
    }
    normalize_rms(&mut x);
    Ok(x)
}

/// Unit-RMS synthetic source of the given kind.
pub fn synth_source(kind: SourceKind, duration_s: f64, fs: u32, seed: u64) -> Result<Vec<f64>> {
    match kind {
        SourceKind::Speech => Ok(speech_like(duration_s, fs, seed)?.samples),
        SourceKind::Noise => pink_noise(duration_s, fs, seed),
    }
}

fn normalize_rms(x: &mut [f64]) {
    let rms = mean_power(x).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
}
