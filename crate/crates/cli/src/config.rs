//! Run configuration: every knob of every command in one JSON document.
//! Files may set any subset; command-line flags override the file.

use std::path::Path;

use adhoc_select::model::{ModelConfig, TrainConfig};
use adhoc_select::scene::SceneConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Settings of the trade-off and SNR-sweep harnesses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub lambdas: Vec<f64>,
    /// Number of seeds per penalty; seed `i` is `seed + i`.
    pub seeds: usize,
    /// Multiplier applied to every penalty in `lambdas`, to bring them to
    /// the scale of the speech loss of a given model size.
    pub lambda_scale: f64,
    /// Share of the dataset held out for testing (taken from the end).
    pub test_fraction: f64,
    pub snr_bins: usize,
    pub snr_low_db: f64,
    pub snr_high_db: f64,
    /// Start penalized models from the same seed's unpenalized model and
    /// train them for `finetune_epochs` epochs.
    pub warm_start: bool,
    pub finetune_epochs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 5e-5, 1e-4],
            seeds: 3,
            lambda_scale: 1.0,
            test_fraction: 0.2,
            snr_bins: 5,
            snr_low_db: -10.0,
            snr_high_db: 10.0,
            warm_start: false,
            finetune_epochs: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub scene: SceneConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            scene: SceneConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        let e = &self.experiment;
        if self.workers == 0 {
            return Err(CliError::usage("workers must be at least 1"));
        }
        if e.seeds == 0 {
            return Err(CliError::usage("experiment.seeds must be at least 1"));
        }
        if e.lambdas.is_empty() || e.lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(CliError::usage("experiment.lambdas must be a non-empty list of penalties >= 0"));
        }
        if !(e.lambda_scale.is_finite() && e.lambda_scale > 0.0) {
            return Err(CliError::usage("experiment.lambda_scale must be positive"));
        }
        if !(0.0..1.0).contains(&e.test_fraction) {
            return Err(CliError::usage("experiment.test_fraction must lie in [0, 1)"));
        }
        if e.snr_bins == 0 || e.snr_high_db <= e.snr_low_db {
            return Err(CliError::usage("SNR binning needs at least one bin over a non-empty range"));
        }
        Ok(())
    }

    /// Writes the resolved configuration next to a command's outputs.
    pub fn write_sidecar(&self, dir: &Path) -> Result<()> {
        let path = dir.join(RUN_CONFIG_FILE);
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_fail_at_every_level() {
        for text in [
            r#"{"sed": 1}"#,
            r#"{"model": {"dd": 8}}"#,
            r#"{"scene": {"mic": 3}}"#,
            r#"{"experiment": {"lambda": [0]}}"#,
        ] {
            assert!(serde_json::from_str::<RunConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn partial_files_keep_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 4, "model": {"d": 16, "heads": 2}}"#).unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.model.d, 16);
        assert_eq!(cfg.scene.mics, 10);
        assert_eq!(cfg.experiment.snr_bins, 5);
    }

    #[test]
    fn sidecar_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { seed: 9, workers: 2, ..RunConfig::default() };
        cfg.write_sidecar(dir.path()).unwrap();
        let back = RunConfig::load(Some(&dir.path().join(RUN_CONFIG_FILE))).unwrap();
        assert_eq!(back, cfg);
    }
}
