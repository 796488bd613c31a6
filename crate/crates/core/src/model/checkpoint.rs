use std::path::Path;

use serde_json::json;

use super::{ModelConfig, Network};
use crate::error::{Error, Result};
use crate::nn::{checkpoint, Adam};
use crate::Scalar;

/// Writes the network weights (and optionally the optimizer state) with
/// the model configuration embedded in the manifest.
pub fn save_network<T: Scalar>(dir: &Path, net: &Network<T>, step: u64, optimizer: Option<&Adam<T>>) -> Result<()> {
    let config = json!({ "model": net.config() });
    checkpoint::save(dir, config, step, net.params(), optimizer)
}

/// Loads a network saved by [`save_network`]; returns it with the saved
/// step count and optimizer state.
pub fn load_network<T: Scalar>(dir: &Path) -> Result<(Network<T>, u64, Option<Adam<T>>)> {
    let loaded = checkpoint::load::<T>(dir)?;
    let path = dir.join(checkpoint::MANIFEST_FILE);
    let model = loaded
        .config
        .get("model")
        .cloned()
        .ok_or_else(|| Error::format(&path, "manifest has no model configuration"))?;
    let cfg: ModelConfig = serde_json::from_value(model).map_err(|e| Error::format(&path, e.to_string()))?;
    let net = Network::from_params(cfg, loaded.params)?;
    Ok((net, loaded.step, loaded.optimizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;

    #[test]
    fn round_trip_restores_weights_and_config() {
        let cfg = ModelConfig {
            filters: 3,
            d: 4,
            heads: 2,
            lambda: 5e-5,
            ..ModelConfig::default()
        };
        let net = Network::<f32>::new(cfg.clone(), 3).unwrap();
        let adam = Adam::new(AdamConfig::default(), net.params());
        let dir = tempfile::tempdir().unwrap();
        save_network(dir.path(), &net, 12, Some(&adam)).unwrap();
        let (back, step, opt) = load_network::<f32>(dir.path()).unwrap();
        assert_eq!(step, 12);
        assert!(opt.is_some());
        assert_eq!(back.config(), &cfg);
        for ((_, _, a), (_, _, b)) in back.params().iter().zip(net.params().iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn mismatched_architecture_is_rejected() {
        let net = Network::<f32>::new(ModelConfig { filters: 3, d: 4, heads: 2, ..Default::default() }, 1).unwrap();
        let other = ModelConfig { filters: 5, d: 4, heads: 2, ..Default::default() };
        assert!(Network::from_params(other, net.params().clone()).is_err());
    }
}
