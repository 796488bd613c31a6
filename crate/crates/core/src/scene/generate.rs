use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_moving_multi, RenderConfig, SourceKind, SourceTrajectory};
use super::room::{distance, Point, Room};
use super::synth::synth_source;
use crate::dsp::rescale_to_snr;
use crate::error::{ensure, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub mics: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Each room dimension is drawn from `[room_min, room_max)`.
    pub room_min: f64,
    pub room_max: f64,
    pub absorption: f64,
    pub max_order: u32,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub n_blocks: usize,
    pub crossfade: usize,
    pub wall_margin: f64,
    /// Microphones are redrawn if closer than this to any block position.
    pub min_source_distance: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            mics: 10,
            duration_s: 2.0,
            sample_rate: 16_000,
            room_min: 10.0,
            room_max: 15.0,
            absorption: 0.35,
            max_order: 10,
            snr_min_db: -10.0,
            snr_max_db: 10.0,
            n_blocks: 8,
            crossfade: 128,
            wall_margin: 0.1,
            min_source_distance: 0.3,
        }
    }
}

impl SceneConfig {
    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.mics >= 1, "at least one microphone is required");
        ensure!(self.duration_s > 0.0, "duration must be positive");
        ensure!(
            self.room_min > 2.0 * self.wall_margin && self.room_max > self.room_min,
            "room range [{}, {}) is empty or too small",
            self.room_min,
            self.room_max
        );
        ensure!(self.snr_max_db >= self.snr_min_db, "snr range is empty");
        ensure!(self.n_blocks >= 1, "n_blocks must be at least 1");
        Ok(())
    }

    fn render(&self) -> RenderConfig {
        RenderConfig {
            n_blocks: self.n_blocks,
            crossfade: self.crossfade,
            fs: self.sample_rate,
            wall_margin: self.wall_margin,
        }
    }
}

/// One multi-microphone scene. Microphone 0 is the reference channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub mixtures: Vec<Vec<f32>>,
    pub clean: Vec<f32>,
    pub mic_positions: Vec<Point>,
    pub room: Room,
    pub speech: SourceTrajectory,
    pub noise: SourceTrajectory,
    pub snr_db: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Scene {
    pub fn mics(&self) -> usize {
        self.mixtures.len()
    }

    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    /// Total audio available across all microphones, in seconds.
    pub fn available_seconds(&self) -> f64 {
        (self.mics() * self.len()) as f64 / self.sample_rate as f64
    }
}

/// Optional overrides for a scene draw.
#[derive(Clone, Copy, Debug, Default)]
pub struct SceneOverrides {
    pub snr_db: Option<f64>,
}

/// Mixes `speech` and `noise` into a scene drawn from `seed`.
pub fn generate_scene(speech: &[f64], noise: &[f64], cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    generate_scene_with(speech, noise, cfg, seed, SceneOverrides::default())
}

pub fn generate_scene_with(
    speech: &[f64],
    noise: &[f64],
    cfg: &SceneConfig,
    seed: u64,
    overrides: SceneOverrides,
) -> Result<Scene> {
    cfg.validate()?;
    let len = cfg.samples();
    ensure!(
        speech.len() >= len && noise.len() >= len,
        "sources must last at least {} s ({} / {} samples given)",
        cfg.duration_s,
        speech.len(),
        noise.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let crop = |x: &[f64], rng: &mut ChaCha8Rng| {
        let off = rng.random_range(0..=x.len() - len);
        x[off..off + len].to_vec()
    };
    let speech = crop(speech, &mut rng);
    let noise = crop(noise, &mut rng);

    let dims = [(); 3].map(|_| rng.random_range(cfg.room_min..cfg.room_max));
    let room = Room::new(dims, cfg.absorption, cfg.max_order)?;
    let point = |rng: &mut ChaCha8Rng| -> Point {
        dims.map(|d| rng.random_range(cfg.wall_margin..d - cfg.wall_margin))
    };
    let speech_traj = SourceTrajectory {
        start: point(&mut rng),
        end: point(&mut rng),
        kind: SourceKind::Speech,
    };
    let noise_traj = SourceTrajectory {
        start: point(&mut rng),
        end: point(&mut rng),
        kind: SourceKind::Noise,
    };
    let drawn_snr = rng.random_range(cfg.snr_min_db..=cfg.snr_max_db);
    let snr_db = overrides.snr_db.unwrap_or(drawn_snr);

    let block_points: Vec<Point> = (0..cfg.n_blocks)
        .flat_map(|b| {
            let f = (b as f64 + 0.5) / cfg.n_blocks as f64;
            [speech_traj.at(f), noise_traj.at(f)]
        })
        .collect();
    let mut mics = Vec::with_capacity(cfg.mics);
    while mics.len() < cfg.mics {
        let p = point(&mut rng);
        if block_points.iter().all(|q| distance(&p, q) >= cfg.min_source_distance) {
            mics.push(p);
        }
    }

    let scaled_noise = rescale_to_snr(&speech, &noise, snr_db)?;
    let render = cfg.render();
    let speech_img = render_moving_multi(&speech, &speech_traj, &room, &mics, &render)?;
    let noise_img = render_moving_multi(&scaled_noise, &noise_traj, &room, &mics, &render)?;
    let mixtures = speech_img
        .iter()
        .zip(&noise_img)
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| (a + b) as f32).collect())
        .collect();
    // dry speech delayed and attenuated along the reference direct path
    let clean = render_moving_multi(&speech, &speech_traj, &room.direct_only(), &mics[..1], &render)?
        .remove(0)
        .into_iter()
        .map(|v| v as f32)
        .collect();

    Ok(Scene {
        mixtures,
        clean,
        mic_positions: mics,
        room,
        speech: speech_traj,
        noise: noise_traj,
        snr_db,
        seed,
        sample_rate: cfg.sample_rate,
    })
}

/// Independent per-item seed from a global seed (SplitMix64 finalizer).
pub fn derive_seed(global: u64, index: u64) -> u64 {
    let mut z = global
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Where the dry sources of each scene come from.
pub enum SourceMaterial<'a> {
    /// Fresh synthetic speech/noise per scene, seeded from the scene seed.
    Synthetic,
    /// Files already loaded; each scene draws one speech and one noise item.
    Corpus {
        speech: &'a [Vec<f64>],
        noise: &'a [Vec<f64>],
    },
}

/// Scene `index` of a dataset generated from `global_seed`.
pub fn generate_indexed(
    material: &SourceMaterial<'_>,
    cfg: &SceneConfig,
    global_seed: u64,
    index: u64,
    overrides: SceneOverrides,
) -> Result<Scene> {
    let seed = derive_seed(global_seed, index);
    match material {
        SourceMaterial::Synthetic => {
            // a little longer than the scene so the crop offset is random
            let dur = cfg.duration_s + 0.5;
            let speech = synth_source(SourceKind::Speech, dur, cfg.sample_rate, derive_seed(seed, 1))?;
            let noise = synth_source(SourceKind::Noise, dur, cfg.sample_rate, derive_seed(seed, 2))?;
            generate_scene_with(&speech, &noise, cfg, seed, overrides)
        }
        SourceMaterial::Corpus { speech, noise } => {
            ensure!(!speech.is_empty() && !noise.is_empty(), "source corpus is empty");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3));
            let s = &speech[rng.random_range(0..speech.len())];
            let n = &noise[rng.random_range(0..noise.len())];
            generate_scene_with(s, n, cfg, seed, overrides)
        }
    }
}

/// Generates `count` scenes, in parallel when the current rayon pool has
/// more than one thread; output order is always by index.
pub fn generate_many(
    material: &SourceMaterial<'_>,
    cfg: &SceneConfig,
    global_seed: u64,
    count: usize,
) -> Result<Vec<Scene>> {
    use rayon::prelude::*;
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_indexed(material, cfg, global_seed, i, SceneOverrides::default()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::mean_power;

    fn small_cfg() -> SceneConfig {
        SceneConfig {
            mics: 3,
            max_order: 2,
            ..SceneConfig::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = small_cfg();
        let a = generate_indexed(&SourceMaterial::Synthetic, &cfg, 7, 0, SceneOverrides::default()).unwrap();
        let b = generate_indexed(&SourceMaterial::Synthetic, &cfg, 7, 0, SceneOverrides::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.mixtures.len(), 3);
        assert!(a.mixtures.iter().all(|m| m.len() == 32000));
        assert_eq!(a.clean.len(), 32000);
        assert!((-10.0..=10.0).contains(&a.snr_db));
        for d in a.room.dims {
            assert!((10.0..15.0).contains(&d));
        }
    }

    #[test]
    fn lower_snr_means_more_noise_everywhere() {
        let cfg = small_cfg();
        let mk = |snr| {
            generate_indexed(&SourceMaterial::Synthetic, &cfg, 3, 1, SceneOverrides { snr_db: Some(snr) })
                .unwrap()
        };
        let (hi, lo) = (mk(10.0), mk(-10.0));
        // identical geometry and speech image; only the noise gain differs
        for m in 0..3 {
            let e_hi: f64 = mean_power(&hi.mixtures[m].iter().map(|&v| v as f64).collect::<Vec<_>>());
            let e_lo: f64 = mean_power(&lo.mixtures[m].iter().map(|&v| v as f64).collect::<Vec<_>>());
            assert!(e_lo > e_hi);
        }
    }

    #[test]
    fn ten_mics_give_twenty_seconds() {
        let cfg = SceneConfig { max_order: 1, ..SceneConfig::default() };
        let s = generate_indexed(&SourceMaterial::Synthetic, &cfg, 1, 0, SceneOverrides::default()).unwrap();
        assert_eq!(s.mics(), 10);
        assert!((s.available_seconds() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn short_sources_are_rejected() {
        let cfg = small_cfg();
        assert!(generate_scene(&[0.1; 100], &[0.1; 40000], &cfg, 0).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(5, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
