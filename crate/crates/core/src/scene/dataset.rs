//! Dataset directories: `manifest.json` plus one 32-bit float WAV per
//! microphone and one for the clean target of every scene.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::render::{SourceKind, SourceTrajectory};
use super::room::{Point, Room};
use super::Scene;
use crate::dsp::wav::{read_wav, write_wav};
use crate::error::{ensure, Error, Result};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub index: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub room_dims: [f64; 3],
    pub absorption: f64,
    pub max_order: u32,
    pub mic_positions: Vec<Point>,
    pub speech_trajectory: [Point; 2],
    pub noise_trajectory: [Point; 2],
    pub mic_files: Vec<String>,
    pub clean_file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub fs: u32,
    #[serde(rename = "M")]
    pub mics: usize,
    pub scene_count: usize,
    /// Free-form provenance (generator seed, config).
    #[serde(default)]
    pub generator: serde_json::Value,
    pub scenes: Vec<SceneEntry>,
}

pub fn mic_file(scene: usize, mic: usize) -> String {
    format!("scene_{scene}_mic_{mic}.wav")
}

pub fn clean_file(scene: usize) -> String {
    format!("scene_{scene}_clean.wav")
}

pub fn write_dataset(scenes: &[Scene], dir: &Path, generator: serde_json::Value) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mics = scenes.first().map_or(0, Scene::mics);
    let fs_hz = scenes.first().map_or(crate::dsp::SAMPLE_RATE, |s| s.sample_rate);
    let mut entries = Vec::with_capacity(scenes.len());
    for (i, s) in scenes.iter().enumerate() {
        if s.mics() != mics {
            return Err(Error::invalid(format!(
                "scene {i} has {} microphones, dataset has {mics}",
                s.mics()
            )));
        }
        let mic_files: Vec<String> = (0..s.mics()).map(|m| mic_file(i, m)).collect();
        for (name, x) in mic_files.iter().zip(&s.mixtures) {
            write_wav(&dir.join(name), x, s.sample_rate)?;
        }
        write_wav(&dir.join(clean_file(i)), &s.clean, s.sample_rate)?;
        entries.push(SceneEntry {
            index: i,
            seed: s.seed,
            snr_db: s.snr_db,
            room_dims: s.room.dims,
            absorption: s.room.absorption,
            max_order: s.room.max_order,
            mic_positions: s.mic_positions.clone(),
            speech_trajectory: [s.speech.start, s.speech.end],
            noise_trajectory: [s.noise.start, s.noise.end],
            mic_files,
            clean_file: clean_file(i),
        });
    }
    let manifest = DatasetManifest {
        schema_version: DATASET_SCHEMA_VERSION,
        fs: fs_hz,
        mics,
        scene_count: scenes.len(),
        generator,
        scenes: entries,
    };
    let path = dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))?;
    if m.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::format(&path, format!("unsupported schema_version {}", m.schema_version)));
    }
    if m.scene_count != m.scenes.len() {
        return Err(Error::format(
            &path,
            format!("scene_count {} but {} entries", m.scene_count, m.scenes.len()),
        ));
    }
    let on_disk = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let n = e.file_name();
            let n = n.to_string_lossy();
            n.starts_with("scene_") && n.ends_with("_clean.wav")
        })
        .count();
    if on_disk != m.scene_count {
        return Err(Error::format(
            &path,
            format!("manifest lists {} scenes, directory holds {on_disk}", m.scene_count),
        ));
    }
    Ok(m)
}

/// Loads scene `entry` from `dir`.
pub fn read_scene(dir: &Path, manifest: &DatasetManifest, entry: &SceneEntry) -> Result<Scene> {
    let load = |name: &str| -> Result<Vec<f32>> {
        let path = dir.join(name);
        let (x, fs_hz) = read_wav(&path)?;
        if fs_hz != manifest.fs {
            return Err(Error::Audio {
                path,
                message: format!("sample rate {fs_hz}, manifest says {}", manifest.fs),
            });
        }
        Ok(x)
    };
    if entry.mic_files.len() != manifest.mics {
        return Err(Error::format(
            dir.join(MANIFEST),
            format!("scene {} lists {} files for {} mics", entry.index, entry.mic_files.len(), manifest.mics),
        ));
    }
    let mixtures = entry
        .mic_files
        .iter()
        .map(|f| load(f))
        .collect::<Result<Vec<_>>>()?;
    let clean = load(&entry.clean_file)?;
    if mixtures.iter().any(|m| m.len() != clean.len()) {
        return Err(Error::format(
            dir.join(&entry.clean_file),
            "microphone and clean files differ in length",
        ));
    }
    Ok(Scene {
        mixtures,
        clean,
        mic_positions: entry.mic_positions.clone(),
        room: Room {
            dims: entry.room_dims,
            absorption: entry.absorption,
            max_order: entry.max_order,
        },
        speech: SourceTrajectory {
            start: entry.speech_trajectory[0],
            end: entry.speech_trajectory[1],
            kind: SourceKind::Speech,
        },
        noise: SourceTrajectory {
            start: entry.noise_trajectory[0],
            end: entry.noise_trajectory[1],
            kind: SourceKind::Noise,
        },
        snr_db: entry.snr_db,
        seed: entry.seed,
        sample_rate: manifest.fs,
    })
}

pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<Scene>)> {
    let manifest = read_manifest(dir)?;
    let scenes = manifest
        .scenes
        .iter()
        .map(|e| read_scene(dir, &manifest, e))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, scenes))
}

/// Every `*.wav` file directly inside `dir`, in file-name order, as
/// samples in `[-1, 1]`. All files must be at `fs`.
pub fn load_source_dir(dir: &Path, fs: u32) -> Result<Vec<Vec<f64>>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    ensure!(!paths.is_empty(), "{} contains no .wav files", dir.display());
    paths
        .iter()
        .map(|p| {
            let (x, rate) = read_wav(p)?;
            if rate != fs {
                return Err(Error::format(p, format!("sample rate {rate} Hz, expected {fs} Hz")));
            }
            Ok(x.into_iter().map(f64::from).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{generate_many, SceneConfig, SourceMaterial};
    use super::*;

    fn scenes(n: usize) -> Vec<Scene> {
        let cfg = SceneConfig {
            mics: 2,
            max_order: 1,
            duration_s: 1.0,
            ..SceneConfig::default()
        };
        generate_many(&SourceMaterial::Synthetic, &cfg, 9, n).unwrap()
    }

    #[test]
    fn source_dirs_load_sorted_and_check_rate() {
        let dir = tempfile::tempdir().unwrap();
        write_wav(&dir.path().join("b.wav"), &[0.5; 10], 16000).unwrap();
        write_wav(&dir.path().join("a.wav"), &[0.25; 20], 16000).unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let got = load_source_dir(dir.path(), 16000).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].len(), 20);
        assert!(load_source_dir(dir.path(), 8000).is_err());
        let empty = tempfile::tempdir().unwrap();
        assert!(load_source_dir(empty.path(), 16000).is_err());
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let sc = scenes(10);
        write_dataset(&sc, dir.path(), serde_json::json!({"seed": 9})).unwrap();
        let (m, back) = read_dataset(dir.path()).unwrap();
        assert_eq!(m.scene_count, 10);
        for (a, b) in back.iter().zip(&sc) {
            assert!(a.mixtures == b.mixtures && a.clean == b.clean, "audio differs for seed {}", b.seed);
            assert!(a == b, "metadata differs for seed {}", b.seed);
        }
    }

    #[test]
    fn missing_scene_file_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&scenes(3), dir.path(), serde_json::Value::Null).unwrap();
        fs::remove_file(dir.path().join(clean_file(2))).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("manifest"), "{err}");
    }

    #[test]
    fn truncated_wav_error_names_file() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&scenes(2), dir.path(), serde_json::Value::Null).unwrap();
        let victim = dir.path().join(mic_file(1, 1));
        let bytes = fs::read(&victim).unwrap();
        fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();
        let err = read_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains(&mic_file(1, 1)), "{err}");
    }
}
