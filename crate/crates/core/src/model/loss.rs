//! Loss values outside the tape, for evaluation and reporting. The
//! training path computes the same quantities on the graph.

use crate::dsp::Spectrogram;
use crate::error::{ensure, Result};
use crate::Scalar;

/// Mean over time-frequency bins of `| |Ŝ|^alpha - |S|^alpha |`.
pub fn loss_speech<T: Scalar>(clean: &Spectrogram<T>, estimate: &Spectrogram<T>, alpha: f64) -> Result<f64> {
    ensure!(
        clean.bins == estimate.bins && clean.frames == estimate.frames,
        "spectrogram shapes differ: {}x{} vs {}x{}",
        clean.bins,
        clean.frames,
        estimate.bins,
        estimate.frames
    );
    let n = clean.re.len();
    ensure!(n > 0, "empty spectrogram");
    let a = clean.magnitude();
    let b = estimate.magnitude();
    let sum: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (y.to_f64_lossy().powf(alpha) - x.to_f64_lossy().powf(alpha)).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Mean chunk cost.
pub fn loss_request(costs: &[f64]) -> Result<f64> {
    ensure!(!costs.is_empty(), "no chunk costs");
    Ok(costs.iter().sum::<f64>() / costs.len() as f64)
}

pub fn total_loss(speech: f64, request: f64, lambda: f64) -> f64 {
    speech + lambda * request
}
