//! Mono WAV reading (16-bit PCM or 32-bit float) and 32-bit float writing.

use std::path::Path;

use crate::error::{Error, Result};

fn audio_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Audio {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a mono file and returns its samples in `[-1, 1]` and its rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f32>, u32)> {
    let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio_err(path, format!("expected mono, found {} channels", spec.channels)));
    }
    let expected = reader.len() as usize;
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(|e| audio_err(path, e))?,
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(|e| audio_err(path, e))?,
        (fmt, bits) => {
            return Err(audio_err(path, format!("unsupported sample format {fmt:?}/{bits} bit")))
        }
    };
    if samples.len() != expected {
        return Err(audio_err(
            path,
            format!("truncated: header declares {expected} samples, found {}", samples.len()),
        ));
    }
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| audio_err(path, e))?;
    for &s in samples {
        writer.write_sample(s).map_err(|e| audio_err(path, e))?;
    }
    writer.finalize().map_err(|e| audio_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.wav");
        let x: Vec<f32> = (0..1000).map(|i| (i as f32 * 0.37).sin() * 0.9).collect();
        write_wav(&path, &x, 16000).unwrap();
        let (y, fs) = read_wav(&path).unwrap();
        assert_eq!(fs, 16000);
        assert_eq!(x, y);
    }

    #[test]
    fn reads_pcm16() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -32768] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let (y, _) = read_wav(&path).unwrap();
        assert_eq!(y, vec![0.0, 0.5, -1.0]);
    }

    #[test]
    fn truncated_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.wav");
        write_wav(&path, &vec![0.25f32; 400], 16000).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 101]).unwrap();
        let err = read_wav(&path).unwrap_err().to_string();
        assert!(err.contains("cut.wav"), "{err}");
    }
}
