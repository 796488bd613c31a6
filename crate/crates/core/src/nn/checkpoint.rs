//! Parameter checkpoints: `checkpoint.json` (manifest) plus
//! `checkpoint.bin` (little-endian f32 arrays in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adam, AdamConfig, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::Scalar;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const BINARY_FILE: &str = "checkpoint.bin";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerEntry {
    pub step: u64,
    #[serde(flatten)]
    pub config: AdamConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub config: serde_json::Value,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
    pub optimizer: Option<OptimizerEntry>,
}

/// Everything read back from a checkpoint directory.
pub struct LoadedCheckpoint<T> {
    pub config: serde_json::Value,
    pub step: u64,
    pub params: ParamStore<T>,
    pub optimizer: Option<Adam<T>>,
}

pub fn save<T: Scalar>(
    dir: &Path,
    config: serde_json::Value,
    step: u64,
    params: &ParamStore<T>,
    optimizer: Option<&Adam<T>>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    let mut bin: Vec<u8> = Vec::with_capacity(params.value_count() * 12);
    let mut offset = 0;
    let mut push = |name: String, shape: Vec<usize>, data: &[T], bin: &mut Vec<u8>| {
        for v in data {
            bin.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
        tensors.push(TensorEntry {
            name,
            shape,
            offset,
            len: data.len(),
        });
        offset += data.len();
    };
    for (_, name, t) in params.iter() {
        push(name.to_string(), t.shape.clone(), &t.data, &mut bin);
    }
    if let Some(adam) = optimizer {
        for (id, name, t) in params.iter() {
            push(format!("adam.m.{name}"), t.shape.clone(), &adam.first[id.index()], &mut bin);
            push(format!("adam.v.{name}"), t.shape.clone(), &adam.second[id.index()], &mut bin);
        }
    }
    let manifest = Manifest {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        config,
        step,
        tensors,
        optimizer: optimizer.map(|a| OptimizerEntry {
            step: a.step,
            config: a.config,
        }),
    };
    let json_path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    let bin_path = dir.join(BINARY_FILE);
    fs::write(&bin_path, bin).map_err(|e| Error::io(&bin_path, e))
}

pub fn load<T: Scalar>(dir: &Path) -> Result<LoadedCheckpoint<T>> {
    let json_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&json_path, e.to_string()))?;
    if manifest.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(Error::format(
            &json_path,
            format!("unsupported schema_version {}", manifest.schema_version),
        ));
    }
    let bin_path = dir.join(BINARY_FILE);
    let bytes = fs::read(&bin_path).map_err(|e| Error::io(&bin_path, e))?;
    let total: usize = manifest.tensors.iter().map(|t| t.len).sum();
    if bytes.len() != total * 4 {
        return Err(Error::format(
            &bin_path,
            format!("expected {} bytes, found {}", total * 4, bytes.len()),
        ));
    }
    let read = |e: &TensorEntry| -> Result<Tensor<T>> {
        if e.shape.iter().product::<usize>() != e.len {
            return Err(Error::format(&json_path, format!("tensor {} has inconsistent shape", e.name)));
        }
        let data = bytes[e.offset * 4..(e.offset + e.len) * 4]
            .chunks_exact(4)
            .map(|c| T::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        Ok(Tensor::new(e.shape.clone(), data))
    };
    let mut params = ParamStore::new();
    let mut moments = std::collections::HashMap::new();
    for e in &manifest.tensors {
        if e.name.starts_with("adam.") {
            moments.insert(e.name.clone(), read(e)?.data);
        } else {
            params.add(e.name.clone(), read(e)?);
        }
    }
    let optimizer = match manifest.optimizer {
        Some(o) => {
            let mut adam = Adam::new(o.config, &params);
            adam.step = o.step;
            for (id, name, _) in params.iter() {
                let (m, v) = (format!("adam.m.{name}"), format!("adam.v.{name}"));
                match (moments.remove(&m), moments.remove(&v)) {
                    (Some(m), Some(v)) => {
                        adam.first[id.index()] = m;
                        adam.second[id.index()] = v;
                    }
                    _ => {
                        return Err(Error::format(&json_path, format!("missing optimizer moments for {name}")))
                    }
                }
            }
            Some(adam)
        }
        None => None,
    };
    Ok(LoadedCheckpoint {
        config: manifest.config,
        step: manifest.step,
        params,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_with_optimizer() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamStore::<f32>::new();
        p.add("a", Tensor::new(vec![2, 2], vec![1.0, -2.5, 3.25, 0.125]));
        p.add("b", Tensor::new(vec![1, 3], vec![0.5; 3]));
        let mut adam = Adam::new(AdamConfig::default(), &p);
        adam.step = 7;
        adam.first[0][1] = 0.25;
        adam.second[1][2] = 2.0;
        save(dir.path(), serde_json::json!({"d": 4}), 7, &p, Some(&adam)).unwrap();
        let back = load::<f32>(dir.path()).unwrap();
        assert_eq!(back.step, 7);
        assert_eq!(back.config["d"], 4);
        assert_eq!(back.params.get(back.params.find("a").unwrap()), p.get(p.find("a").unwrap()));
        let opt = back.optimizer.unwrap();
        assert_eq!(opt.step, 7);
        assert_eq!(opt.first, adam.first);
        assert_eq!(opt.second, adam.second);
    }

    #[test]
    fn short_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = ParamStore::<f32>::new();
        p.add("a", Tensor::new(vec![1, 4], vec![1.0; 4]));
        save(dir.path(), serde_json::Value::Null, 0, &p, None).unwrap();
        let bin = dir.path().join(BINARY_FILE);
        std::fs::write(&bin, [0u8; 6]).unwrap();
        let err = load::<f32>(dir.path()).err().unwrap().to_string();
        assert!(err.contains(BINARY_FILE), "{err}");
    }
}
