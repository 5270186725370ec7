use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{example_loss, metrics, Checkpoint, EpochRecord, RmsProp, TrainConfig};
use crate::data::{batch_and_pad, CategoryMap, Example, Label, Task, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{build_example, forward, Layout, ModelConfig, ModelParams};
use crate::tensor::{Tape, Tensor};

/// Examples whose gradients are accumulated sequentially before the
/// fixed-order reduction across groups.
const GRAD_GROUP: usize = 4;

/// Examples per forward call during evaluation.
const EVAL_CHUNK: usize = 256;

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Best validation epoch, or the last finite parameters after divergence.
    pub checkpoint: Checkpoint,
    /// Diagnostic when training stopped on a non-finite value.
    pub divergence: Option<String>,
}

/// Dataset context stored alongside the trained parameters.
#[derive(Clone, Copy, Debug)]
pub struct TrainContext<'a> {
    pub vocab: &'a Vocabulary,
    pub categories: Option<&'a CategoryMap>,
}

/// Loss and summed gradients of a group of examples.
fn group_gradients(
    params: &ModelParams,
    model: &ModelConfig,
    batch: &crate::data::Batch,
    rows: std::ops::Range<usize>,
    dropout_seed: u64,
    stream_base: u64,
) -> Result<(f64, ModelParams)> {
    let mut acc = params.zeros_like();
    let mut loss = 0.0;
    for b in rows {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        rng.set_stream(stream_base + b as u64);
        let mut tape = Tape::new();
        let vars = params.record(&mut tape)?;
        let graph = build_example(&mut tape, &vars, model, batch, b, Layout::Compact, Some(&mut rng))?;
        let l = example_loss(&mut tape, graph.logits, &batch.labels[b], model.task)?;
        loss += tape.value(l).item()?;
        let grads = tape.backward(l)?;
        for (slot, leaf) in acc.tensors_mut().into_iter().zip(&vars.leaves) {
            if let Some(g) = grads.get(*leaf) {
                slot.add_assign(g)?;
            }
        }
    }
    Ok((loss, acc))
}

/// Mean loss and mean gradient over `examples`.
pub fn batch_gradients(
    params: &ModelParams,
    model: &ModelConfig,
    examples: &[Example],
    dropout_seed: u64,
    stream_base: u64,
) -> Result<(f64, ModelParams)> {
    let batch = batch_and_pad(examples, model.max_visits, model.max_codes)?;
    let groups: Vec<(f64, ModelParams)> = (0..batch.size)
        .step_by(GRAD_GROUP)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let rows = start..(start + GRAD_GROUP).min(batch.size);
            group_gradients(params, model, &batch, rows, dropout_seed, stream_base)
        })
        .collect::<Result<_>>()?;
    let mut groups = groups.into_iter();
    let (mut loss, mut grads) = groups.next().ok_or_else(|| Error::Data("empty batch".into()))?;
    for (l, g) in groups {
        loss += l;
        grads.add_assign(&g)?;
    }
    let n = batch.size as f64;
    grads.scale(1.0 / n);
    Ok((loss / n, grads))
}

/// Eval-mode logits `[N×C]` for any number of examples.
pub fn predict(params: &ModelParams, model: &ModelConfig, examples: &[Example]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(examples.len() * model.num_classes);
    for chunk in examples.chunks(EVAL_CHUNK) {
        let batch = batch_and_pad(chunk, model.max_visits, model.max_codes)?;
        data.extend(forward(&batch, params, model)?.into_data());
    }
    Tensor::new([examples.len(), model.num_classes], data)
}

/// Ranking score per example for readmission: the logit margin of the
/// positive class.
pub fn readmission_scores(logits: &Tensor) -> Vec<f64> {
    (0..logits.shape()[0]).map(|b| logits.get(&[b, 1]) - logits.get(&[b, 0])).collect()
}

/// Metric used for model selection: PR-AUC or precision@20.
pub fn selection_metric(logits: &Tensor, examples: &[Example], task: Task) -> Result<f64> {
    match task {
        Task::Readmission => {
            let labels: Vec<bool> = examples.iter().map(|e| matches!(e.label, Label::Readmission(true))).collect();
            metrics::pr_auc(&readmission_scores(logits), &labels)
        }
        Task::Diagnosis => {
            let scores: Vec<Vec<f64>> = (0..logits.shape()[0]).map(|b| logits.row(b).to_vec()).collect();
            metrics::precision_at_k(&scores, &diagnosis_labels(examples)?, 20)
        }
    }
}

pub(crate) fn diagnosis_labels(examples: &[Example]) -> Result<Vec<Vec<usize>>> {
    examples
        .iter()
        .map(|e| match &e.label {
            Label::Diagnosis(y) => Ok(y.clone()),
            other => Err(Error::Contract(format!("expected a diagnosis label, got {other:?}"))),
        })
        .collect()
}

fn check_inputs(train: &[Example], model: &ModelConfig, config: &TrainConfig) -> Result<()> {
    model.validate()?;
    config.validate()?;
    if model.task != config.task {
        return Err(Error::Config(format!(
            "model head is {} but training task is {}",
            model.task, config.task
        )));
    }
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    Ok(())
}

/// Trains from a seeded initialization and keeps the best validation epoch.
pub fn train(
    train: &[Example],
    valid: &[Example],
    model: &ModelConfig,
    config: &TrainConfig,
    context: TrainContext<'_>,
) -> Result<TrainOutcome> {
    check_inputs(train, model, config)?;
    let mut params = ModelParams::init(model, config.seed)?;
    let mut optimizer = RmsProp::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    let checkpoint = |params: ModelParams, epoch: usize, history: &[EpochRecord]| Checkpoint {
        model: model.clone(),
        train: config.clone(),
        seed: config.seed,
        vocab: context.vocab.clone(),
        categories: context.categories.cloned(),
        epoch,
        history: history.to_vec(),
        params,
    };

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (step, idx) in order.chunks(config.batch_size).enumerate() {
            let examples: Vec<Example> = idx.iter().map(|&i| train[i].clone()).collect();
            let stream = ((epoch as u64) << 40) + ((step as u64) << 16);
            let (loss, grads) = batch_gradients(&params, model, &examples, config.seed, stream)?;
            if !loss.is_finite() || !grads.all_finite() {
                let msg = format!("non-finite loss or gradient at epoch {epoch}, step {}", step + 1);
                log::error!("{msg}");
                return Ok(TrainOutcome {
                    checkpoint: checkpoint(params, epoch - 1, &history),
                    divergence: Some(msg),
                });
            }
            let previous = params.clone();
            optimizer.step(&mut params, &grads, config);
            if !params.all_finite() {
                let msg = format!("parameters became non-finite at epoch {epoch}, step {}", step + 1);
                log::error!("{msg}");
                return Ok(TrainOutcome {
                    checkpoint: checkpoint(previous, epoch - 1, &history),
                    divergence: Some(msg),
                });
            }
            loss_sum += loss * examples.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;

        let (valid_loss, valid_metric) = if valid.is_empty() {
            (None, None)
        } else {
            let logits = predict(&params, model, valid)?;
            let labels: Vec<Label> = valid.iter().map(|e| e.label.clone()).collect();
            let loss = super::loss(&logits, &labels, model.task)?;
            let metric = match selection_metric(&logits, valid, model.task) {
                Ok(m) => Some(m),
                Err(e) => {
                    log::warn!("validation metric unavailable: {e}");
                    None
                }
            };
            (Some(loss), metric)
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}, valid loss {}, valid metric {}",
            valid_loss.map_or("-".into(), |l| format!("{l:.5}")),
            valid_metric.map_or("-".into(), |m| format!("{m:.5}"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
            valid_metric,
        });
        if let Some(m) = valid_metric {
            if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
                best = Some((m, epoch, params.clone()));
            }
        }
    }

    let (params, epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, config.epochs),
    };
    Ok(TrainOutcome {
        checkpoint: checkpoint(params, epoch, &history),
        divergence: None,
    })
}
