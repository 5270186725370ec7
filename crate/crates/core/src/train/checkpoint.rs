use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::data::{CategoryMap, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

/// Losses and validation metric after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub valid_metric: Option<f64>,
}

/// Self-describing snapshot of a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub vocab: Vocabulary,
    /// Present for diagnosis models.
    pub categories: Option<CategoryMap>,
    /// Epoch the parameters come from, 0 before any update.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut ckpt: Checkpoint = serde_json::from_str(&text)?;
        ckpt.vocab = ckpt.vocab.reindex()?;
        ckpt.model.validate()?;
        ckpt.params.check_shapes(&ckpt.model)?;
        if ckpt.vocab.table_size() != ckpt.model.vocab_size {
            return Err(Error::Data(format!(
                "checkpoint vocabulary has {} rows, model expects {}",
                ckpt.vocab.table_size(),
                ckpt.model.vocab_size
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let vocab = Vocabulary::from_codes(["a", "b", "c"]).unwrap();
        let model = ModelConfig {
            d: 4,
            vocab_size: vocab.table_size(),
            max_interval: 7,
            ..Default::default()
        };
        let ckpt = Checkpoint {
            params: ModelParams::init(&model, 9).unwrap(),
            model,
            train: TrainConfig::default(),
            seed: 9,
            vocab,
            categories: None,
            epoch: 3,
            history: vec![EpochRecord {
                epoch: 1,
                train_loss: 0.1 + 0.2,
                valid_loss: None,
                valid_metric: Some(1.0 / 3.0),
            }],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }
}
