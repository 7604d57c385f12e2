//! Versioned JSON container for trained parameters.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Parameters plus the configuration and normalization needed to rebuild a model.
///
/// Serialization is byte-stable: identical inputs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub model_kind: String,
    pub config: serde_json::Value,
    pub norm: serde_json::Value,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(model_kind: &str, config: serde_json::Value, norm: serde_json::Value, store: &ParamStore) -> Self {
        let params = store
            .iter()
            .map(|(name, t)| ParamRecord { name: name.to_string(), shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect();
        Self { version: CHECKPOINT_VERSION, model_kind: model_kind.to_string(), config, norm, params }
    }

    pub fn named_tensors(&self) -> Result<Vec<(String, Tensor)>> {
        self.params
            .iter()
            .map(|p| Ok((p.name.clone(), Tensor::new(p.shape.clone(), p.data.clone())?)))
            .collect()
    }

    /// Checks version and kind before a model consumes the parameters.
    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        if self.model_kind != kind {
            return Err(Error::Checkpoint(format!("expected model_kind {kind}, found {}", self.model_kind)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let chk: Checkpoint = serde_json::from_str(s)?;
        if chk.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", chk.version)));
        }
        Ok(chk)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
