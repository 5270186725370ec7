use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};

/// Architecture and regularization settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Embedding width `d`.
    pub d: usize,
    /// Most recent visits kept per journey (`m`).
    pub max_visits: usize,
    /// Codes kept per visit (`k_max`).
    pub max_codes: usize,
    /// Rows of the code embedding table, padding row included.
    pub vocab_size: usize,
    /// Output classes `C`.
    pub num_classes: usize,
    pub dropout: f64,
    /// Largest day offset with its own interval encoding (`L`).
    pub max_interval: usize,
    pub task: Task,
    pub use_attention_pooling: bool,
    pub use_positional_mask: bool,
    pub use_interval_encoding: bool,
    /// Stacked masked self-attention blocks per direction.
    pub depth: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 128,
            max_visits: 16,
            max_codes: 32,
            vocab_size: 1,
            num_classes: 2,
            dropout: 0.1,
            max_interval: 1000,
            task: Task::Readmission,
            use_attention_pooling: true,
            use_positional_mask: true,
            use_interval_encoding: true,
            depth: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d", self.d),
            ("max_visits", self.max_visits),
            ("max_codes", self.max_codes),
            ("num_classes", self.num_classes),
            ("depth", self.depth),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocabulary needs at least one code besides padding".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.task == Task::Readmission && self.num_classes != 2 {
            return Err(Error::Config(format!(
                "readmission head has 2 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Closed-form number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        let d = self.d;
        let pooling = 2 * d * d + 2 * d;
        let msa = 3 * d * d + 4 * d;
        let embedding = self.vocab_size * d;
        let interval = (self.max_interval + 1) * d;
        let classifier = self.num_classes * 2 * d + self.num_classes;
        embedding + 3 * pooling + interval + 2 * self.depth * msa + classifier
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_once_vocab_is_set() {
        let cfg = ModelConfig::default();
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig { vocab_size: 10, ..cfg };
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_dropout_and_sizes() {
        let base = ModelConfig { vocab_size: 10, ..Default::default() };
        assert!(ModelConfig { dropout: 1.0, ..base.clone() }.validate().is_err());
        assert!(ModelConfig { d: 0, ..base.clone() }.validate().is_err());
        assert!(ModelConfig { num_classes: 3, ..base }.validate().is_err());
    }

    #[test]
    fn parameter_count_by_hand() {
        // d=128, 2000 table rows, C=2, L=1000
        let cfg = ModelConfig { vocab_size: 2000, ..Default::default() };
        let expected = 2000 * 128 + 3 * (2 * 128 * 128 + 2 * 128) + 1001 * 128 + 2 * (3 * 128 * 128 + 4 * 128) + 2 * 256 + 2;
        assert_eq!(cfg.parameter_count(), expected);
        assert_eq!(expected, 583_042);
    }
}
