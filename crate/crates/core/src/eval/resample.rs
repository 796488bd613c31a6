//! Rational 16 kHz to 10 kHz resampling (up 5, down 8).

use std::sync::OnceLock;

const UP: usize = 5;
const DOWN: usize = 8;
/// Kaiser shape for roughly 60 dB stopband attenuation.
const BETA: f64 = 5.65;
/// Pass band edge and stop band edge, Hz at 16 kHz input.
const PASS_HZ: f64 = 4500.0;
const STOP_HZ: f64 = 5000.0;

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Low-pass prototype at the upsampled rate, DC gain `UP`.
fn filter() -> &'static [f64] {
    static TAPS: OnceLock<Vec<f64>> = OnceLock::new();
    TAPS.get_or_init(|| {
        let fs_up = 16_000.0 * UP as f64;
        let width = (STOP_HZ - PASS_HZ) / fs_up * std::f64::consts::TAU;
        let mut n = ((60.0 - 8.0) / (2.285 * width)).ceil() as usize + 1;
        if n % 2 == 0 {
            n += 1;
        }
        let fc = 0.5 * (PASS_HZ + STOP_HZ) / fs_up;
        let mid = (n - 1) as f64 / 2.0;
        let norm = bessel_i0(BETA);
        let mut h: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 - mid;
                let sinc = if t == 0.0 {
                    2.0 * fc
                } else {
                    (std::f64::consts::TAU * fc * t).sin() / (std::f64::consts::PI * t)
                };
                let r = t / mid;
                sinc * bessel_i0(BETA * (1.0 - r * r).max(0.0).sqrt()) / norm
            })
            .collect();
        let sum: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v *= UP as f64 / sum);
        h
    })
}

/// Polyphase resampling by 5/8 with a Kaiser-windowed sinc anti-alias
/// filter; output sample `m` is aligned with input time `8m/5`.
pub fn resample_16k_to_10k(x: &[f64]) -> Vec<f64> {
    let h = filter();
    let delay = (h.len() - 1) / 2;
    let out_len = (x.len() * UP).div_ceil(DOWN);
    (0..out_len)
        .map(|m| {
            // position in the zero-stuffed upsampled signal
            let c = m * DOWN + delay;
            let n_hi = (c / UP).min(x.len().saturating_sub(1));
            let n_lo = c.saturating_sub(h.len() - 1).div_ceil(UP);
            (n_lo..=n_hi).map(|n| x[n] * h[c - UP * n]).sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_stays_dc() {
        let y = resample_16k_to_10k(&[0.7; 16000]);
        assert_eq!(y.len(), 10000);
        for v in &y[200..9800] {
            assert!((v - 0.7).abs() < 1e-3, "{v}");
        }
    }

    /// Least-squares fit of a 1 kHz sine at the output rate.
    #[test]
    fn sine_keeps_frequency_and_amplitude() {
        let x: Vec<f64> = (0..16000)
            .map(|n| 0.8 * (std::f64::consts::TAU * 1000.0 * n as f64 / 16000.0 + 0.3).sin())
            .collect();
        let y = resample_16k_to_10k(&x);
        let w = std::f64::consts::TAU * 1000.0 / 10000.0;
        let (mut ss, mut sc, mut cc, mut ys, mut yc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (m, &v) in y.iter().enumerate().take(9500).skip(500) {
            let (s, c) = ((w * m as f64).sin(), (w * m as f64).cos());
            ss += s * s;
            sc += s * c;
            cc += c * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        let amp = (a * a + b * b).sqrt();
        assert!((amp - 0.8).abs() < 0.008, "{amp}");
        let resid: f64 = y[500..9500]
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let m = (i + 500) as f64;
                (v - a * (w * m).sin() - b * (w * m).cos()).powi(2)
            })
            .sum::<f64>();
        assert!(resid / 9000.0 < 1e-5);
    }

    #[test]
    fn content_above_five_khz_is_rejected() {
        // 6.5 kHz would alias to 3.5 kHz at the output rate
        for f in [5200.0, 6500.0, 7800.0] {
            let x: Vec<f64> = (0..16000)
                .map(|n| (std::f64::consts::TAU * f * n as f64 / 16000.0).sin())
                .collect();
            let y = resample_16k_to_10k(&x);
            let seg = &y[1000..9192];
            let out_energy: f64 = seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64;
            // input power 0.5; require >= 40 dB attenuation
            assert!(out_energy < 0.5 * 1e-4, "{f} Hz: {out_energy}");
        }
    }
}
