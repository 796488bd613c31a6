use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use adhoc_select::eval::{
    bin_scores, match_k, run_tradeoff_experiment, snr_bins, summarize, try_score_scenes, SceneScore, SnrRow,
};
use adhoc_select::model::{
    load_network, save_network, split_train_val, train, write_train_log, ModelConfig, Network, TrainConfig,
};
use adhoc_select::scene::{
    derive_seed, generate_many, load_source_dir, read_dataset, write_dataset, Scene, SourceMaterial,
};
use adhoc_select::Model32;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MODEL_DIR: &str = "model";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const EVALUATION_CSV: &str = "evaluation.csv";
pub const TRADEOFF_CSV: &str = "tradeoff.csv";
pub const SNR_SWEEP_CSV: &str = "snr_sweep.csv";

/// Creates `dir`, refusing to reuse a non-empty one unless `force` is set,
/// in which case its contents are removed first.
pub fn prepare_out(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?.next().is_some();
        if non_empty {
            if !force {
                return Err(CliError::usage(format!(
                    "output directory {} is not empty; pass --force to overwrite it",
                    dir.display()
                )));
            }
            std::fs::remove_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// CSV output flushed after every row, so a failed run keeps what it had.
struct RowWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl RowWriter {
    fn create(path: PathBuf) -> Result<Self> {
        let inner = csv::Writer::from_path(&path).map_err(|source| CliError::Csv { path: path.clone(), source })?;
        Ok(Self { path, inner })
    }

    fn write(&mut self, row: &impl Serialize) -> Result<()> {
        let path = &self.path;
        self.inner.serialize(row).map_err(|source| CliError::Csv { path: path.clone(), source })?;
        self.inner.flush().map_err(|e| CliError::io(path, e))
    }
}

// ---- simulate ----

pub struct SimulateArgs {
    pub count: usize,
    pub out: PathBuf,
    pub speech_dir: Option<PathBuf>,
    pub noise_dir: Option<PathBuf>,
    pub force: bool,
}

pub fn simulate(cfg: &RunConfig, args: &SimulateArgs) -> Result<()> {
    if args.count == 0 {
        return Err(CliError::usage("--count must be at least 1"));
    }
    let corpus = match (&args.speech_dir, &args.noise_dir) {
        (Some(s), Some(n)) => Some((load_source_dir(s, cfg.scene.sample_rate)?, load_source_dir(n, cfg.scene.sample_rate)?)),
        (None, None) => None,
        _ => return Err(CliError::usage("--speech-dir and --noise-dir must be given together")),
    };
    prepare_out(&args.out, args.force)?;
    cfg.write_sidecar(&args.out)?;
    let material = match &corpus {
        Some((speech, noise)) => SourceMaterial::Corpus { speech, noise },
        None => SourceMaterial::Synthetic,
    };
    let scenes = generate_many(&material, &cfg.scene, cfg.seed, args.count)?;
    let generator = serde_json::json!({
        "seed": cfg.seed,
        "source": if corpus.is_some() { "corpus" } else { "synthetic" },
        "scene": cfg.scene,
    });
    write_dataset(&scenes, &args.out, generator)?;
    println!(
        "simulated {} scenes with {} microphones (seed {}) into {}",
        scenes.len(),
        cfg.scene.mics,
        cfg.seed,
        args.out.display()
    );
    Ok(())
}

// ---- train ----

pub struct TrainArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub init: Option<PathBuf>,
    pub force: bool,
}

fn load_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let (_, scenes) = read_dataset(dir)?;
    if scenes.is_empty() {
        return Err(CliError::usage(format!("dataset {} has no scenes", dir.display())));
    }
    Ok(scenes)
}

/// Fresh network from `model`, or the weights of `init` under `model`'s
/// loss settings (the architectures must agree).
fn initial_network(model: &ModelConfig, seed: u64, init: Option<&Path>) -> Result<Model32> {
    match init {
        None => Ok(Network::new(model.clone(), derive_seed(seed, 0))?),
        Some(dir) => {
            let (net, _, _) = load_network::<f32>(&checkpoint_dir(dir))?;
            Ok(Network::from_params(model.clone(), net.params().clone())?)
        }
    }
}

/// Trains, then writes the best weights and the log under `out`.
fn fit(net: Model32, train_set: &[Scene], val_set: &[Scene], tc: &TrainConfig, seed: u64, out: &Path) -> Result<Model32> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let outcome = train(net, train_set, val_set, tc, derive_seed(seed, 1), |_| {})?;
    save_network(&out.join(MODEL_DIR), &outcome.network, outcome.steps, Some(&outcome.optimizer))?;
    write_train_log(&out.join(TRAIN_LOG), &outcome.log)?;
    log::info!(
        "trained {} steps, best epoch {} of {}",
        outcome.steps,
        outcome.best_epoch,
        outcome.log.len()
    );
    Ok(outcome.network)
}

pub fn train_cmd(cfg: &RunConfig, args: &TrainArgs) -> Result<()> {
    let scenes = load_scenes(&args.data)?;
    prepare_out(&args.out, args.force)?;
    cfg.write_sidecar(&args.out)?;
    let (tr, va) = split_train_val(&scenes, cfg.train.val_fraction);
    let net = initial_network(&cfg.model, cfg.seed, args.init.as_deref())?;
    fit(net, tr, va, &cfg.train, cfg.seed, &args.out)?;
    println!(
        "trained on {} scenes ({} validation) with lambda {}; checkpoint in {}",
        tr.len(),
        va.len(),
        cfg.model.lambda,
        args.out.join(MODEL_DIR).display()
    );
    Ok(())
}

// ---- evaluate ----

pub struct EvaluateArgs {
    pub data: PathBuf,
    pub checkpoint: PathBuf,
    pub out: PathBuf,
    pub force: bool,
}

#[derive(Serialize)]
struct EvaluationRow {
    scene: usize,
    snr_db: f64,
    mean_n: f64,
    streamed_seconds: f64,
    stoi: f64,
}

/// Resolves a checkpoint argument: either a checkpoint directory or a
/// training output directory holding one.
fn checkpoint_dir(path: &Path) -> PathBuf {
    let nested = path.join(MODEL_DIR);
    if nested.is_dir() {
        nested
    } else {
        path.to_path_buf()
    }
}

pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> Result<()> {
    let scenes = load_scenes(&args.data)?;
    let (net, _, _) = load_network::<f32>(&checkpoint_dir(&args.checkpoint))?;
    prepare_out(&args.out, args.force)?;
    cfg.write_sidecar(&args.out)?;
    let mut csv = RowWriter::create(args.out.join(EVALUATION_CSV))?;
    let mut done = Vec::with_capacity(scenes.len());
    for (i, result) in try_score_scenes(&net, &scenes, cfg.seed).into_iter().enumerate() {
        let s = result.map_err(|e| CliError::usage(format!("scene {i}: {e}")))?;
        csv.write(&EvaluationRow {
            scene: i,
            snr_db: s.snr_db,
            mean_n: s.mean_n,
            streamed_seconds: s.streamed_seconds,
            stoi: s.stoi,
        })?;
        done.push(s);
    }
    let (secs, quality) = summarize(&done);
    println!("evaluated {} scenes: mean streamed {secs:.3} s, mean STOI {quality:.4}", done.len());
    Ok(())
}

// ---- experiments ----

/// Train, validation and test parts: the last `test_fraction` of the
/// scenes are the test set, the validation set is cut from the rest.
fn experiment_split(scenes: &[Scene], test_fraction: f64, val_fraction: f64) -> Result<(&[Scene], &[Scene], &[Scene])> {
    let n = scenes.len();
    let test = ((n as f64 * test_fraction).ceil() as usize).max(1);
    if test >= n {
        return Err(CliError::usage(format!("{n} scenes are too few to hold out {test} for testing")));
    }
    let (rest, test_set) = scenes.split_at(n - test);
    let (tr, va) = split_train_val(rest, val_fraction);
    Ok((tr, va, test_set))
}

pub struct TradeoffArgs {
    pub data: PathBuf,
    pub out: PathBuf,
    pub force: bool,
}

fn model_tag(lambda: f64, seed: u64) -> String {
    format!("lambda_{lambda:e}_seed_{seed}")
}

pub fn tradeoff(cfg: &RunConfig, args: &TradeoffArgs) -> Result<()> {
    let scenes = load_scenes(&args.data)?;
    let e = &cfg.experiment;
    let (tr, va, test) = experiment_split(&scenes, e.test_fraction, cfg.train.val_fraction)?;
    prepare_out(&args.out, args.force)?;
    cfg.write_sidecar(&args.out)?;
    let lambdas: Vec<f64> = e.lambdas.iter().map(|l| l * e.lambda_scale).collect();
    let seeds: Vec<u64> = (0..e.seeds as u64).map(|i| cfg.seed + i).collect();
    let models = args.out.join("models");
    let mut bases: HashMap<u64, Model32> = HashMap::new();
    let finetune = TrainConfig { max_epochs: e.finetune_epochs.max(1), ..cfg.train.clone() };

    let mut model_for = |lambda: f64, seed: u64| -> adhoc_select::Result<Model32> {
        let run = |net: Model32, tc: &TrainConfig, tag: String| {
            log::info!("training {tag}");
            fit(net, tr, va, tc, seed, &models.join(tag)).map_err(into_core)
        };
        let fresh = ModelConfig { lambda: 0.0, ..cfg.model.clone() };
        if e.warm_start && lambda > 0.0 {
            if !bases.contains_key(&seed) {
                let base = run(Network::new(fresh, derive_seed(seed, 0))?, &cfg.train, model_tag(0.0, seed))?;
                bases.insert(seed, base);
            }
            let start = bases[&seed].clone().with_lambda(lambda)?;
            return run(start, &finetune, model_tag(lambda, seed));
        }
        let net = run(
            Network::new(ModelConfig { lambda, ..fresh }, derive_seed(seed, 0))?,
            &cfg.train,
            model_tag(lambda, seed),
        )?;
        if lambda == 0.0 {
            bases.insert(seed, net.clone());
        }
        Ok(net)
    };

    let mut csv = RowWriter::create(args.out.join(TRADEOFF_CSV))?;
    let mut write_err = None;
    let rows = run_tradeoff_experiment(&lambdas, &seeds, test, &mut model_for, |row| {
        csv.write(row).map_err(|e| {
            let msg = e.to_string();
            write_err = Some(e);
            adhoc_select::Error::InvalidArgument(msg)
        })
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    let rows = rows?;
    println!("wrote {} trade-off rows to {}", rows.len(), args.out.join(TRADEOFF_CSV).display());
    Ok(())
}

fn into_core(e: CliError) -> adhoc_select::Error {
    match e {
        CliError::Core(e) => e,
        other => adhoc_select::Error::InvalidArgument(other.to_string()),
    }
}

pub enum FixedK {
    Checkpoint(PathBuf),
    Auto,
    K(usize),
}

pub struct SnrSweepArgs {
    pub data: PathBuf,
    pub model: PathBuf,
    pub fixed_k: FixedK,
    pub out: PathBuf,
    pub force: bool,
}

/// Copy of `adaptive` that always aggregates `k` microphones, fine-tuned
/// on the training split.
fn fixed_k_from(adaptive: &Model32, k: usize, cfg: &RunConfig, tr: &[Scene], va: &[Scene], out: &Path) -> Result<Model32> {
    let model = ModelConfig { fixed_k: Some(k), ..adaptive.config().clone() };
    let start = Network::from_params(model, adaptive.params().clone())?;
    let tc = TrainConfig { max_epochs: cfg.experiment.finetune_epochs.max(1), ..cfg.train.clone() };
    fit(start, tr, va, &tc, cfg.seed, out)
}

pub fn snr_sweep(cfg: &RunConfig, args: &SnrSweepArgs) -> Result<()> {
    let scenes = load_scenes(&args.data)?;
    let e = &cfg.experiment;
    let (tr, va, test) = experiment_split(&scenes, e.test_fraction, cfg.train.val_fraction)?;
    let bins = snr_bins(e.snr_bins, e.snr_low_db, e.snr_high_db)?;
    let (adaptive, _, _) = load_network::<f32>(&checkpoint_dir(&args.model))?;
    prepare_out(&args.out, args.force)?;
    cfg.write_sidecar(&args.out)?;
    let fixed = match &args.fixed_k {
        FixedK::Checkpoint(dir) => load_network::<f32>(&checkpoint_dir(dir))?.0,
        FixedK::Auto => {
            let held = if va.is_empty() { tr } else { va };
            let k = match_k(&adaptive, held, &bins, cfg.seed)?;
            log::info!("matched fixed budget K = {k}");
            fixed_k_from(&adaptive, k, cfg, tr, va, &args.out.join("fixed_k"))?
        }
        FixedK::K(k) => fixed_k_from(&adaptive, *k, cfg, tr, va, &args.out.join("fixed_k"))?,
    };
    let fixed_name = match fixed.config().fixed_k {
        Some(k) => format!("fixed_k{k}"),
        None => "reference".to_string(),
    };

    let mut csv = RowWriter::create(args.out.join(SNR_SWEEP_CSV))?;
    let mut rows: Vec<SnrRow> = Vec::new();
    for (name, net) in [("adaptive", &adaptive), (fixed_name.as_str(), &fixed)] {
        let scores: Vec<SceneScore> = try_score_scenes(net, test, cfg.seed)
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| CliError::usage(format!("{name}: test scene {i}: {e}"))))
            .collect::<Result<_>>()?;
        for row in bin_scores(name, &scores, &bins) {
            csv.write(&row)?;
            rows.push(row);
        }
    }
    println!("wrote {} SNR-sweep rows to {}", rows.len(), args.out.join(SNR_SWEEP_CSV).display());
    Ok(())
}
