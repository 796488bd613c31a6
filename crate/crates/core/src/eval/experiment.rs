//! Experiment harnesses: the cost/quality trade-off over request penalties
//! and the per-SNR comparison of an adaptive model against a fixed-K one.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{comm_cost_seconds, stoi};
use crate::error::{ensure, Result};
use crate::model::{eval_mic_order, Mode, Network};
use crate::scene::Scene;
use crate::Scalar;

/// Metrics of one enhanced scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneScore {
    pub snr_db: f64,
    pub streamed_seconds: f64,
    pub mean_n: f64,
    pub stoi: f64,
}

/// Runs `net` on scene `index` in eval mode and scores the estimate.
pub fn score_scene<T: Scalar>(net: &Network<T>, scene: &Scene, seed: u64, index: usize) -> Result<SceneScore> {
    let order = eval_mic_order(scene.mics(), seed, index);
    let out = net.forward(scene, &order, Mode::Eval)?;
    let clean: Vec<f64> = scene.clean.iter().map(|&v| v as f64).collect();
    let est: Vec<f64> = out.s_hat.iter().map(|v| v.to_f64_lossy()).collect();
    let ns = out.requested();
    Ok(SceneScore {
        snr_db: scene.snr_db,
        streamed_seconds: comm_cost_seconds(&ns, net.config().chunk_hop(), scene.sample_rate, scene.len()),
        mean_n: out.mean_n(),
        stoi: stoi(&clean, &est)?,
    })
}

/// [`score_scene`] over every scene, in parallel, one result per scene in
/// scene order.
pub fn try_score_scenes<T: Scalar>(net: &Network<T>, scenes: &[Scene], seed: u64) -> Vec<Result<SceneScore>> {
    scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| score_scene(net, scene, seed, i))
        .collect()
}

/// Like [`try_score_scenes`] but fails on the first failing scene.
pub fn score_scenes<T: Scalar>(net: &Network<T>, scenes: &[Scene], seed: u64) -> Result<Vec<SceneScore>> {
    try_score_scenes(net, scenes, seed).into_iter().collect()
}

/// STOI of the unprocessed reference microphone, per scene.
pub fn reference_stoi(scenes: &[Scene]) -> Result<Vec<f64>> {
    scenes
        .par_iter()
        .map(|scene| {
            let clean: Vec<f64> = scene.clean.iter().map(|&v| v as f64).collect();
            let noisy: Vec<f64> = scene.mixtures[0].iter().map(|&v| v as f64).collect();
            stoi(&clean, &noisy)
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Means over a set of scene scores.
pub fn summarize(scores: &[SceneScore]) -> (f64, f64) {
    (
        mean(scores.iter().map(|s| s.streamed_seconds)),
        mean(scores.iter().map(|s| s.stoi)),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub lambda: f64,
    pub seed: u64,
    pub mean_streamed_seconds: f64,
    pub mean_stoi: f64,
    pub n_scenes: usize,
}

/// Evaluates one model per `(lambda, seed)` on the test scenes. `model_for`
/// trains or loads the model; rows are handed to `on_row` as soon as they
/// exist so callers can persist partial results.
pub fn run_tradeoff_experiment<T: Scalar>(
    lambdas: &[f64],
    seeds: &[u64],
    test: &[Scene],
    mut model_for: impl FnMut(f64, u64) -> Result<Network<T>>,
    mut on_row: impl FnMut(&TradeoffRow) -> Result<()>,
) -> Result<Vec<TradeoffRow>> {
    ensure!(!test.is_empty(), "no test scenes");
    let mut rows = Vec::with_capacity(lambdas.len() * seeds.len());
    for &lambda in lambdas {
        for &seed in seeds {
            let net = model_for(lambda, seed)?;
            let scores = score_scenes(&net, test, seed)?;
            let (secs, quality) = summarize(&scores);
            let row = TradeoffRow {
                lambda,
                seed,
                mean_streamed_seconds: secs,
                mean_stoi: quality,
                n_scenes: scores.len(),
            };
            on_row(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// `count` equal-width bins over `[low, high]`.
pub fn snr_bins(count: usize, low: f64, high: f64) -> Result<Vec<(f64, f64)>> {
    ensure!(count >= 1, "need at least one SNR bin");
    ensure!(high > low, "SNR range [{low}, {high}] is empty");
    let w = (high - low) / count as f64;
    Ok((0..count)
        .map(|i| (low + i as f64 * w, if i + 1 == count { high } else { low + (i + 1) as f64 * w }))
        .collect())
}

/// Index of the bin holding `snr`. Bins are closed on the left; the last
/// one is closed on both sides.
pub fn bin_of(bins: &[(f64, f64)], snr: f64) -> Option<usize> {
    let last = bins.len().checked_sub(1)?;
    bins.iter()
        .position(|&(lo, hi)| snr >= lo && snr < hi)
        .or_else(|| (snr == bins[last].1).then_some(last))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrRow {
    pub model: String,
    pub snr_bin_low: f64,
    pub snr_bin_high: f64,
    pub mean_streamed_seconds: f64,
    pub mean_stoi: f64,
    pub n_scenes: usize,
}

/// Groups scene scores into SNR bins. Empty bins yield NaN means.
pub fn bin_scores(model: &str, scores: &[SceneScore], bins: &[(f64, f64)]) -> Vec<SnrRow> {
    bins.iter()
        .enumerate()
        .map(|(b, &(lo, hi))| {
            let inside: Vec<&SceneScore> = scores.iter().filter(|s| bin_of(bins, s.snr_db) == Some(b)).collect();
            SnrRow {
                model: model.to_string(),
                snr_bin_low: lo,
                snr_bin_high: hi,
                mean_streamed_seconds: mean(inside.iter().map(|s| s.streamed_seconds)),
                mean_stoi: mean(inside.iter().map(|s| s.stoi)),
                n_scenes: inside.len(),
            }
        })
        .collect()
}

/// Evaluates each named model on the scenes and reports per-bin means,
/// model by model.
pub fn run_snr_sweep<T: Scalar>(
    models: &[(&str, &Network<T>)],
    scenes: &[Scene],
    bins: &[(f64, f64)],
    seed: u64,
    mut on_row: impl FnMut(&SnrRow) -> Result<()>,
) -> Result<Vec<SnrRow>> {
    ensure!(!scenes.is_empty(), "no scenes to sweep");
    let mut rows = Vec::with_capacity(models.len() * bins.len());
    for (name, net) in models {
        let scores = score_scenes(net, scenes, seed)?;
        for row in bin_scores(name, &scores, bins) {
            on_row(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Fixed-K budget matching the adaptive model in the hardest scenes: the
/// adaptive model's mean request count over the scenes of the lowest
/// populated SNR bin, rounded up.
pub fn match_k<T: Scalar>(adaptive: &Network<T>, scenes: &[Scene], bins: &[(f64, f64)], seed: u64) -> Result<usize> {
    let scores = score_scenes(adaptive, scenes, seed)?;
    let hardest = (0..bins.len())
        .find(|&b| scores.iter().any(|s| bin_of(bins, s.snr_db) == Some(b)))
        .ok_or_else(|| crate::Error::invalid("no scene falls into any SNR bin"))?;
    let n = mean(scores.iter().filter(|s| bin_of(bins, s.snr_db) == Some(hardest)).map(|s| s.mean_n));
    let mics = scenes[0].mics();
    Ok((n.ceil() as usize).clamp(1, mics))
}
