use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{random_mic_order, Losses, Mode, Network};
use super::HaltState;
use crate::error::{ensure, Error, Result};
use crate::eval::comm_cost_seconds;
use crate::nn::{Adam, AdamConfig, Grads};
use crate::scene::{derive_seed, Scene};
use crate::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// Hard cap on optimizer steps, if any.
    pub max_steps: Option<u64>,
    /// Share of the scenes held out for validation (taken from the end).
    pub val_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            max_epochs: 100,
            patience: 5,
            max_steps: None,
            val_fraction: 0.1,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.batch_size >= 1, "batch_size must be at least 1");
        ensure!(self.max_epochs >= 1, "max_epochs must be at least 1");
        ensure!((0.0..1.0).contains(&self.val_fraction), "val_fraction must lie in [0, 1)");
        ensure!(self.adam.lr > 0.0, "learning rate must be positive");
        Ok(())
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub mean_streamed_seconds: f64,
    pub mean_n: f64,
}

pub struct TrainOutcome<T: Scalar> {
    /// Weights with the lowest validation loss (the last ones when there
    /// is no validation set).
    pub network: Network<T>,
    pub optimizer: Adam<T>,
    pub log: Vec<TrainLogRow>,
    pub steps: u64,
    pub best_epoch: usize,
}

/// Evaluation of one scene.
#[derive(Clone, Debug)]
pub struct EvalRecord {
    pub losses: Losses,
    pub per_chunk: Vec<HaltState>,
    pub streamed_seconds: f64,
}

impl EvalRecord {
    pub fn mean_n(&self) -> f64 {
        self.per_chunk.iter().map(|h| h.n as f64).sum::<f64>() / self.per_chunk.len() as f64
    }
}

/// Splits off the last `ceil(n * fraction)` scenes for validation,
/// keeping at least one scene for training.
pub fn split_train_val(scenes: &[Scene], fraction: f64) -> (&[Scene], &[Scene]) {
    let n = scenes.len();
    let val = ((n as f64 * fraction).ceil() as usize).min(n.saturating_sub(1));
    scenes.split_at(n - val)
}

/// Deterministic evaluation order of scene `index`.
pub fn eval_mic_order(mics: usize, seed: u64, index: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index as u64));
    random_mic_order(mics, &mut rng)
}

/// Eval-mode losses and requests on every scene, in scene order.
pub fn evaluate_scenes<T: Scalar>(net: &Network<T>, scenes: &[Scene], seed: u64) -> Result<Vec<EvalRecord>> {
    let hop = net.config().chunk_hop();
    scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let order = eval_mic_order(scene.mics(), seed, i);
            let out = net.forward(scene, &order, Mode::Eval)?;
            let ns = out.requested();
            Ok(EvalRecord {
                losses: out.losses,
                streamed_seconds: comm_cost_seconds(&ns, hop, scene.sample_rate, scene.len()),
                per_chunk: out.per_chunk,
            })
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

/// Mini-batch Adam training with early stopping on the validation loss.
///
/// Every random choice (scene order, microphone order, dropout) derives
/// from `seed`; batch gradients are reduced in scene order, so results do
/// not depend on the number of worker threads.
pub fn train<T: Scalar>(
    mut net: Network<T>,
    train_set: &[Scene],
    val_set: &[Scene],
    cfg: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&TrainLogRow),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    ensure!(!train_set.is_empty(), "training set is empty");
    let mut adam = Adam::new(cfg.adam, net.params());
    let mut log = Vec::new();
    let mut best: Option<(f64, Network<T>, usize)> = None;
    let mut stale = 0;
    let mut steps = 0u64;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let eval_seed = derive_seed(seed, u64::MAX);

    'epochs: for epoch in 1..=cfg.max_epochs {
        let epoch_seed = derive_seed(seed, epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut epoch_losses = Vec::with_capacity(order.len());
        let mut stop = false;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<(Losses, Grads<T>)> = batch
                .par_iter()
                .enumerate()
                .map(|(j, &i)| {
                    let item_seed = derive_seed(epoch_seed, (b * cfg.batch_size + j) as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
                    let scene = &train_set[i];
                    let mics = random_mic_order(scene.mics(), &mut rng);
                    let (losses, _, grads) = net.loss_and_grads(scene, &mics, Mode::Train(&mut rng))?;
                    Ok((losses, grads))
                })
                .collect::<Result<_>>()?;
            let mut total = Grads::zeros_like(net.params());
            for (losses, grads) in &results {
                total.accumulate(grads);
                epoch_losses.push(losses.total);
            }
            total.scale(T::one() / T::lit(results.len() as f64));
            if !total.is_finite() {
                return Err(Error::invalid(format!("non-finite gradient at step {}", steps + 1)));
            }
            adam.step(net.params_mut(), &total);
            steps += 1;
            if cfg.max_steps.is_some_and(|m| steps >= m) {
                stop = true;
                break;
            }
        }

        let train_loss = mean(epoch_losses.iter().copied());
        let (val_loss, secs, mean_n) = if val_set.is_empty() {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            let recs = evaluate_scenes(&net, val_set, eval_seed)?;
            (
                mean(recs.iter().map(|r| r.losses.total)),
                mean(recs.iter().map(|r| r.streamed_seconds)),
                mean(recs.iter().map(EvalRecord::mean_n)),
            )
        };
        let row = TrainLogRow {
            epoch,
            train_loss,
            val_loss,
            mean_streamed_seconds: secs,
            mean_n,
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.5} val {val_loss:.5} streamed {secs:.2}s N {mean_n:.2}"
        );
        on_epoch(&row);
        log.push(row);

        if !val_set.is_empty() {
            if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
                best = Some((val_loss, net.clone(), epoch));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        if stop || stale >= cfg.patience {
            break 'epochs;
        }
    }

    let (network, best_epoch) = match best {
        Some((_, n, e)) => (n, e),
        None => (net, log.len()),
    };
    Ok(TrainOutcome {
        network,
        optimizer: adam,
        log,
        steps,
        best_epoch,
    })
}

pub const TRAIN_LOG_HEADER: &str = "epoch,train_loss,val_loss,mean_streamed_seconds,mean_N";

/// Writes the training log as CSV.
pub fn write_train_log(path: &Path, rows: &[TrainLogRow]) -> Result<()> {
    let mut out = String::from(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.val_loss, r.mean_streamed_seconds, r.mean_n
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::scene::{generate_many, SceneConfig, SourceMaterial};

    fn small() -> (ModelConfig, Vec<Scene>) {
        let model = ModelConfig {
            filters: 8,
            d: 8,
            heads: 2,
            ffn_mult: 2,
            chunk_frames: 4,
            dropout: 0.0,
            ..ModelConfig::default()
        };
        let scenes = SceneConfig {
            mics: 2,
            max_order: 1,
            duration_s: 0.5,
            ..SceneConfig::default()
        };
        (model, generate_many(&SourceMaterial::Synthetic, &scenes, 3, 4).unwrap())
    }

    #[test]
    fn split_keeps_training_scenes() {
        let (_, scenes) = small();
        let (tr, va) = split_train_val(&scenes, 0.1);
        assert_eq!((tr.len(), va.len()), (3, 1));
        let (tr, va) = split_train_val(&scenes[..1], 0.5);
        assert_eq!((tr.len(), va.len()), (1, 0));
    }

    #[test]
    fn training_is_reproducible_and_reduces_loss() {
        let (model, scenes) = small();
        let cfg = TrainConfig {
            batch_size: 2,
            max_epochs: 30,
            patience: 100,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            ..TrainConfig::default()
        };
        let run = || {
            let net = Network::<f32>::new(model.clone(), 1).unwrap();
            train(net, &scenes[..3], &scenes[3..], &cfg, 5, |_| {}).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.steps, 60);
        assert_eq!(a.log, b.log);
        for ((_, _, x), (_, _, y)) in a.network.params().iter().zip(b.network.params().iter()) {
            assert_eq!(x.data, y.data);
        }
        let first = a.log.first().unwrap().train_loss;
        let last = a.log.last().unwrap().train_loss;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let (model, _) = small();
        let net = Network::<f32>::new(model, 1).unwrap();
        assert!(train(net, &[], &[], &TrainConfig::default(), 0, |_| {}).is_err());
    }

    #[test]
    fn log_csv_has_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let row = TrainLogRow { epoch: 1, train_loss: 0.5, val_loss: 0.4, mean_streamed_seconds: 4.0, mean_n: 2.0 };
        write_train_log(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with(TRAIN_LOG_HEADER));
        assert_eq!(text.lines().count(), 2);
    }
}
