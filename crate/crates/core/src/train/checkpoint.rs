//! Checkpoint directory: `model.json` manifest plus `weights.bin`.
//!
//! `weights.bin` is the flat concatenation of every parameter tensor as
//! little-endian IEEE-754 `f32`, in storage order: conv blocks by depth
//! (weight, bias), LSTM (w, u, b), dense (weight, bias), output (weight,
//! bias). Each tensor is row-major. The manifest records the SHA-256 of the
//! weight file and the layout used to write it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::trainer::{TrainConfig, TrainHistory};
use crate::error::{Error, Result};
use crate::nn::{ModelConfig, Parameters};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "model.json";
pub const WEIGHTS_FILE: &str = "weights.bin";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub params: Parameters<f32>,
    pub train_config: TrainConfig,
    pub history: TrainHistory,
    /// SHA-256 of the preprocessing artifact the model was trained against.
    pub preprocessing_digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorLayout {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub history: TrainHistory,
    pub preprocessing_digest: Option<String>,
    pub weights_file: String,
    pub weights_dtype: String,
    pub weights_sha256: String,
    pub layout: Vec<TensorLayout>,
}

pub fn encode_weights(params: &Parameters<f32>) -> Vec<u8> {
    params.to_flat().iter().flat_map(|v| v.to_le_bytes()).collect()
}

impl Checkpoint {
    pub fn weights_digest(&self) -> String {
        sha256_hex(&encode_weights(&self.params))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bytes = encode_weights(&ckpt.params);
    let layout = ckpt
        .params
        .names()
        .into_iter()
        .zip(ckpt.params.tensors())
        .map(|(name, t)| TensorLayout {
            name,
            shape: t.shape().to_vec(),
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model_config: ckpt.model_config.clone(),
        train_config: ckpt.train_config.clone(),
        history: ckpt.history.clone(),
        preprocessing_digest: ckpt.preprocessing_digest.clone(),
        weights_file: WEIGHTS_FILE.into(),
        weights_dtype: "f32-le".into(),
        weights_sha256: sha256_hex(&bytes),
        layout,
    };
    let wpath = dir.join(WEIGHTS_FILE);
    std::fs::write(&wpath, &bytes).map_err(|e| Error::io(&wpath, e))?;
    let mpath = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let mpath = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let raw: serde_json::Value = serde_json::from_str(&text)?;
    let version = raw
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Invalid(format!("{}: missing format_version", mpath.display())))?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: version as u32,
            supported: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(raw)?;
    if manifest.weights_dtype != "f32-le" {
        return Err(Error::Invalid(format!("unsupported weight dtype {}", manifest.weights_dtype)));
    }

    let mut params = Parameters::<f32>::zeros(&manifest.model_config.shapes()?);
    let wpath = dir.join(&manifest.weights_file);
    let bytes = std::fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;
    let expected = params.count() * 4;
    if bytes.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let actual = sha256_hex(&bytes);
    if actual != manifest.weights_sha256 {
        return Err(Error::Digest {
            what: wpath.display().to_string(),
            expected: manifest.weights_sha256,
            actual,
        });
    }
    let flat: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    params.load_flat(&flat)?;
    Ok(Checkpoint {
        model_config: manifest.model_config,
        params,
        train_config: manifest.train_config,
        history: manifest.history,
        preprocessing_digest: manifest.preprocessing_digest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, ConvBlock};

    fn ckpt() -> Checkpoint {
        let cfg = ModelConfig {
            input_features: 10,
            conv_blocks: vec![ConvBlock {
                filters: 3,
                kernel_size: 3,
            }],
            pool_size: 2,
            lstm_units: 4,
            dropout_rate: 0.1,
            dense_units: 5,
            seed: 1,
        };
        Checkpoint {
            params: init_params(&cfg, 1).unwrap(),
            model_config: cfg,
            train_config: TrainConfig::default(),
            history: TrainHistory::default(),
            preprocessing_digest: Some("abc".into()),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let c = ckpt();
        save_checkpoint(&c, dir.path()).unwrap();
        let back = load_checkpoint(dir.path()).unwrap();
        let bits = |p: &Parameters<f32>| p.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.params), bits(&c.params));
        assert_eq!(back, c);
    }

    #[test]
    fn corrupted_byte_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&ckpt(), dir.path()).unwrap();
        let w = dir.path().join(WEIGHTS_FILE);
        let mut bytes = std::fs::read(&w).unwrap();
        bytes[17] ^= 0x40;
        std::fs::write(&w, &bytes).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Digest { .. })));
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&w, &bytes).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Truncated { .. })));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(&ckpt(), dir.path()).unwrap();
        let m = dir.path().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&m).unwrap();
        std::fs::write(&m, text.replace("\"format_version\": 1", "\"format_version\": 99")).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path()),
            Err(Error::Version { found: 99, .. })
        ));
    }
}
