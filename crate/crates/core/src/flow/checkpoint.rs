//! JSON model checkpoints.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::FlowModel;
use super::train::{TrainConfig, TrainReport};
use crate::dataset::write_atomic;
use crate::error::{Error, Result};

/// A trained model plus enough provenance to decide whether it is stale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dim: usize,
    pub model: FlowModel,
    pub train_config: TrainConfig,
    /// Digest of the inputs the model was trained from.
    pub input_digest: String,
    pub best_epoch: usize,
    pub best_validation_nll: f64,
}

impl Checkpoint {
    pub fn new(
        model: FlowModel,
        train_config: TrainConfig,
        report: &TrainReport,
        input_digest: String,
    ) -> Self {
        Self {
            dim: model.dim(),
            model,
            train_config,
            input_digest,
            best_epoch: report.best_epoch,
            best_validation_nll: report.best_validation_nll,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    /// Loads and validates a checkpoint; any inconsistency is a format error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Self =
            serde_json::from_slice(&text).map_err(|e| Error::format(path, e.to_string()))?;
        ckpt.model
            .validate()
            .map_err(|e| Error::format(path, e.to_string()))?;
        if ckpt.dim != ckpt.model.dim() {
            return Err(Error::format(path, "dimension does not match architecture"));
        }
        Ok(ckpt)
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("checkpoint serializes");
        hex::encode(Sha256::digest(&json))
    }
}
