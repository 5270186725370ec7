use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::fit::{diagnosis_labels, predict, readmission_scores};
use super::{metrics, Checkpoint};
use crate::data::{Example, Label, Task};
use crate::error::{Error, Result};

/// Cut-offs reported for diagnosis prediction.
pub const DEFAULT_KS: [usize; 4] = [5, 10, 20, 30];

/// Evaluation summary of a checkpoint on a set of examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    /// Average precision (step-wise PR-AUC) for readmission.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pr_auc: Option<f64>,
    /// precision@k keyed by k, for diagnosis.
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub precision_at: BTreeMap<usize, f64>,
    pub epochs: usize,
    pub seed: u64,
    pub config_digest: String,
    pub examples: usize,
    /// Positive rate of the evaluated labels (readmission).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prevalence: Option<f64>,
    /// Expected precision@k of a random ranking (diagnosis).
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub random_precision_at: BTreeMap<usize, f64>,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub valid_loss: Vec<Option<f64>>,
    pub valid_metric: Vec<Option<f64>>,
}

impl MetricsReport {
    /// Headline number: PR-AUC or precision@20.
    pub fn primary_metric(&self) -> Option<f64> {
        match self.task {
            Task::Readmission => self.pr_auc,
            Task::Diagnosis => self.precision_at.get(&20).copied(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task: {}  examples: {}  seed: {}", self.task, self.examples, self.seed)?;
        writeln!(f, "epochs: {}  best epoch: {}", self.epochs, self.best_epoch)?;
        if let Some(ap) = self.pr_auc {
            write!(f, "PR-AUC (average precision): {ap:.4}")?;
            if let Some(p) = self.prevalence {
                write!(f, "  prevalence: {p:.4}")?;
            }
            writeln!(f)?;
        }
        for (k, p) in &self.precision_at {
            write!(f, "precision@{k}: {p:.4}")?;
            if let Some(r) = self.random_precision_at.get(k) {
                write!(f, "  random: {r:.4}")?;
            }
            writeln!(f)?;
        }
        write!(f, "config digest: {}", self.config_digest)
    }
}

/// SHA-256 of the model and training configuration.
pub fn config_digest(checkpoint: &Checkpoint) -> Result<String> {
    let json = serde_json::to_string(&(&checkpoint.model, &checkpoint.train))?;
    Ok(Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
}

/// Scores `examples` with the checkpoint. `ks` applies to diagnosis.
pub fn evaluate(checkpoint: &Checkpoint, examples: &[Example], ks: &[usize]) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let model = &checkpoint.model;
    let logits = predict(&checkpoint.params, model, examples)?;
    if !logits.all_finite() {
        return Err(Error::Numeric("model produced non-finite logits".into()));
    }
    let mut report = MetricsReport {
        task: model.task,
        pr_auc: None,
        precision_at: BTreeMap::new(),
        epochs: checkpoint.history.len(),
        seed: checkpoint.seed,
        config_digest: config_digest(checkpoint)?,
        examples: examples.len(),
        prevalence: None,
        random_precision_at: BTreeMap::new(),
        best_epoch: checkpoint.epoch,
        train_loss: checkpoint.history.iter().map(|h| h.train_loss).collect(),
        valid_loss: checkpoint.history.iter().map(|h| h.valid_loss).collect(),
        valid_metric: checkpoint.history.iter().map(|h| h.valid_metric).collect(),
    };
    match model.task {
        Task::Readmission => {
            let labels: Vec<bool> = examples
                .iter()
                .map(|e| match e.label {
                    Label::Readmission(y) => Ok(y),
                    ref other => Err(Error::Contract(format!("expected a readmission label, got {other:?}"))),
                })
                .collect::<Result<_>>()?;
            let positives = labels.iter().filter(|&&y| y).count();
            report.prevalence = Some(positives as f64 / labels.len() as f64);
            report.pr_auc = Some(metrics::pr_auc(&readmission_scores(&logits), &labels)?);
        }
        Task::Diagnosis => {
            let labels = diagnosis_labels(examples)?;
            let scores: Vec<Vec<f64>> = (0..examples.len()).map(|b| logits.row(b).to_vec()).collect();
            for &k in ks {
                report.precision_at.insert(k, metrics::precision_at_k(&scores, &labels, k)?);
                report
                    .random_precision_at
                    .insert(k, metrics::random_precision_at_k(&labels, model.num_classes, k)?);
            }
        }
    }
    Ok(report)
}
