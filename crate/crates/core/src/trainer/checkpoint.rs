use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::FeatureMap;

use super::adam::Params;
use super::encoder::{EncoderConfig, ToyEncoder};
use super::train::TrainConfig;

pub const MAGIC: &[u8; 8] = b"SPIXREG1";

/// Trained encoder weights with the settings that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub encoder: EncoderConfig,
    pub train: Option<TrainConfig>,
    /// Epoch (1-based) the weights come from; 0 for untrained weights.
    pub epoch: usize,
    pub val_accuracy: Option<f64>,
    pub params: Params,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 3],
    /// Offset in floats from the start of the data section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    encoder: EncoderConfig,
    train: Option<TrainConfig>,
    epoch: usize,
    val_accuracy: Option<f64>,
    tensors: Vec<TensorEntry>,
}

impl Checkpoint {
    /// Serializes as the magic bytes, a little-endian `u32` manifest length,
    /// the JSON manifest and the tensors as little-endian `f32`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let tensors = self
            .params
            .iter()
            .map(|(name, v)| {
                let (h, w, c) = v.dims();
                let e = TensorEntry {
                    name: name.clone(),
                    shape: [h, w, c],
                    offset,
                };
                offset += v.len();
                e
            })
            .collect();
        let manifest = Manifest {
            encoder: self.encoder.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            val_accuracy: self.val_accuracy,
            tensors,
        };
        let json = serde_json::to_vec(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        let len = u32::try_from(json.len()).map_err(|_| Error::Format("manifest too large".into()))?;
        let mut out = Vec::with_capacity(12 + json.len() + 4 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for (_, v) in &self.params {
            for &x in v.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a SPIXREG1 checkpoint".into()));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| Error::Format("truncated checkpoint manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(json).map_err(|e| Error::Format(format!("bad manifest: {e}")))?;
        let data = &bytes[12 + len..];
        let mut params = Vec::with_capacity(manifest.tensors.len());
        for t in &manifest.tensors {
            let [h, w, c] = t.shape;
            let n = h * w * c;
            let raw = data
                .get(4 * t.offset..4 * (t.offset + n))
                .ok_or_else(|| Error::Format(format!("tensor {} exceeds the data section", t.name)))?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            params.push((t.name.clone(), FeatureMap::from_vec(h, w, c, values)?));
        }
        let ckpt = Self {
            encoder: manifest.encoder,
            train: manifest.train,
            epoch: manifest.epoch,
            val_accuracy: manifest.val_accuracy,
            params,
        };
        ToyEncoder::new(ckpt.encoder.clone())?.check_params(&ckpt.params)?;
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Parameters rounded to the stored precision.
    pub fn rounded(&self) -> Self {
        let mut c = self.clone();
        for (_, v) in &mut c.params {
            for x in v.data_mut() {
                *x = *x as f32 as f64;
            }
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let enc = ToyEncoder::new(EncoderConfig::new(3)).unwrap();
        Checkpoint {
            encoder: enc.config().clone(),
            train: Some(TrainConfig::default()),
            epoch: 4,
            val_accuracy: Some(0.75),
            params: enc.init(9),
        }
    }

    #[test]
    fn round_trip_matches_rounded_params() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..8], b"SPIXREG1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c.rounded());
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_input_rejected() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(Checkpoint::from_bytes(b"SPIXREG2\0\0\0\0").is_err());
        let mut bad = bytes.clone();
        bad[8] = 0xff;
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
