use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkSpec, SemanticWbNet, TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::imaging::NormalizationStats;
use crate::nn::{ParamStore, Sgd};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to run inference or resume training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    pub class_count: usize,
    pub normalization: NormalizationStats,
    /// Completed epochs.
    pub epoch: usize,
    pub params: ParamStore,
    pub velocity: ParamStore,
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn from_trainer(
        trainer: &Trainer,
        class_count: usize,
        normalization: NormalizationStats,
    ) -> Self {
        let params = trainer.net.body().params();
        Self {
            format_version: CHECKPOINT_VERSION,
            network: trainer.net.spec().clone(),
            train: trainer.config.clone(),
            class_count,
            normalization,
            epoch: trainer.epoch,
            params: ParamStore::from_params(params.iter().copied()),
            velocity: ParamStore::from_velocity(params, &trainer.sgd.velocity),
            loss_history: trainer.loss_history.clone(),
        }
    }

    /// Rebuilds the network, rejecting stored tensors that do not fit the spec.
    pub fn network(&self) -> Result<SemanticWbNet> {
        let mut net = SemanticWbNet::build(&self.network)?;
        self.params.load_into(&mut net.body_mut().params_mut())?;
        Ok(net)
    }

    /// Restores the trainer with its optimizer state and epoch counter.
    pub fn trainer(&self) -> Result<Trainer> {
        let net = self.network()?;
        let velocity = self.velocity.velocity_for(net.body().params())?;
        self.train.validate()?;
        Ok(Trainer {
            net,
            sgd: Sgd {
                config: self.train.optimizer.clone(),
                velocity,
            },
            config: self.train.clone(),
            epoch: self.epoch,
            loss_history: self.loss_history.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Malformed {
            what: "checkpoint",
            message: e.to_string(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let malformed = |e: serde_json::Error| Error::Malformed {
            what: "checkpoint",
            message: e.to_string(),
        };
        let header: Header = serde_json::from_str(text).map_err(malformed)?;
        if header.format_version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                what: "checkpoint",
                found: header.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        serde_json::from_str(text).map_err(malformed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
