//! Self-describing JSON checkpoints.
//!
//! A checkpoint holds the model configuration, the vocabulary in id order and
//! every parameter tensor as a flat row-major array. Floats are written in
//! shortest round-trip form, so save/load reproduces parameters bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParameters, Tagger, Vocabulary};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tabal-tagger/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn from_tagger(tagger: &Tagger) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: tagger.config.clone(),
            vocabulary: tagger.vocab.clone(),
            tensors: tagger
                .params
                .tensors()
                .into_iter()
                .map(|(name, t)| TensorRecord { name, data: t.to_vec() })
                .collect(),
        }
    }

    pub fn into_tagger(self) -> Result<Tagger> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format {:?}", self.format)));
        }
        self.config.validate()?;
        let mut params = ModelParameters::zeros(&self.config, self.vocabulary.len());
        {
            let slots = params.tensors_mut();
            if slots.len() != self.tensors.len() {
                return Err(Error::Config(format!(
                    "checkpoint has {} tensors, config implies {}",
                    self.tensors.len(),
                    slots.len()
                )));
            }
            for ((name, slot), rec) in slots.into_iter().zip(&self.tensors) {
                if name != rec.name || slot.len() != rec.data.len() {
                    return Err(Error::Config(format!(
                        "tensor {} ({} values) does not match expected {name} ({} values)",
                        rec.name,
                        rec.data.len(),
                        slot.len()
                    )));
                }
                slot.copy_from_slice(&rec.data);
            }
        }
        Tagger::from_parts(self.config, self.vocabulary, params)
    }
}

pub fn save_checkpoint(tagger: &Tagger, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_vec(&Checkpoint::from_tagger(tagger))?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Tagger> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
    ckpt.into_tagger()
}
