use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, ParamVars};
use crate::attention::{interval_encode_var, msa, pool, score_mask, Direction, MsaVars, PositionalMask};
use crate::data::{Batch, PAD_INDEX};
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// How an example is laid out on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Only the example's real visits and codes.
    Compact,
    /// The full `max_visits × max_codes` grid of the batch, padding included.
    Padded,
}

/// Tape nodes of one example's forward pass.
#[derive(Clone, Debug)]
pub struct ExampleGraph {
    /// `[C]`.
    pub logits: Var,
    /// Visit embeddings before interval encoding, `[n×d]`.
    pub visits: Var,
    /// Forward- and backward-masked block outputs, `[n×d]` each.
    pub branches: [Var; 2],
    /// Visit-level readouts per branch, `[d]` each.
    pub pooled: [Var; 2],
    /// Code-level pooling probabilities `[n×d×k]`.
    pub code_probs: Option<Var>,
    /// Visit-level pooling probabilities per branch, `[d×n]` each.
    pub visit_probs: Option<[Var; 2]>,
    /// Visit slots on the tape (`n`).
    pub slots: usize,
    /// Code slots per visit on the tape (`k`).
    pub code_slots: usize,
}

/// Records the network for row `b` of `batch`.
///
/// Dropout is applied when `rng` is given and the configured rate is positive.
pub fn build_example<'p>(
    tape: &mut Tape<'p>,
    vars: &ParamVars,
    config: &ModelConfig,
    batch: &Batch,
    b: usize,
    layout: Layout,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<ExampleGraph> {
    let count = batch.visit_count(b);
    if count == 0 || count > config.max_visits {
        return Err(Error::Contract(format!(
            "embedding stage: example {b} has {count} visits, model accepts 1..={}",
            config.max_visits
        )));
    }
    let codes: Vec<Vec<u32>> = (0..count).map(|i| batch.visit_codes(b, i).collect()).collect();
    let widest = codes.iter().map(Vec::len).max().unwrap_or(0);
    if widest == 0 || widest > config.max_codes {
        return Err(Error::Contract(format!(
            "embedding stage: example {b} has a visit with {widest} codes, model accepts 1..={}",
            config.max_codes
        )));
    }
    let (slots, code_slots) = match layout {
        Layout::Compact => (count, widest),
        Layout::Padded => (batch.max_visits, batch.max_codes),
    };
    let d = config.d;

    let mut indices = vec![PAD_INDEX as usize; slots * code_slots];
    let mut code_valid = vec![false; slots * code_slots];
    for (i, visit) in codes.iter().enumerate() {
        for (c, &code) in visit.iter().enumerate() {
            if code as usize >= config.vocab_size || code == PAD_INDEX {
                return Err(Error::Contract(format!(
                    "embedding stage: code index {code} outside 1..{}",
                    config.vocab_size
                )));
            }
            indices[i * code_slots + c] = code as usize;
            code_valid[i * code_slots + c] = true;
        }
    }
    let visit_valid: Vec<bool> = (0..slots).map(|i| i < count).collect();

    let emb = tape.gather(vars.embedding, &indices)?;
    let mut emb = tape.reshape(emb, &[slots, code_slots, d])?;
    if let Some(r) = rng.as_deref_mut() {
        emb = tape.dropout(emb, config.dropout, r)?;
    }
    let (visits, code_probs) = if config.use_attention_pooling {
        let (v, p) = pool(tape, emb, &code_valid, &vars.code_pool)?;
        (v, Some(p))
    } else {
        (masked_sum(tape, emb, &code_valid, d)?, None)
    };

    let mut inputs = visits;
    if config.use_interval_encoding {
        let mut positions = batch.positions(b).to_vec();
        positions.resize(slots, 0);
        let enc = interval_encode_var(tape, vars.interval, &positions, config.max_interval)?;
        inputs = tape.add(inputs, enc)?;
    }

    let mut branches = [inputs; 2];
    let directions = [(Direction::Forward, &vars.forward), (Direction::Backward, &vars.backward)];
    for (branch, (direction, blocks)) in branches.iter_mut().zip(directions) {
        let positional = if config.use_positional_mask {
            Some(PositionalMask::new(slots, direction)?)
        } else {
            None
        };
        let mask = score_mask(positional.as_ref(), &visit_valid)?;
        *branch = run_blocks(tape, inputs, &mask, blocks, config.dropout, &mut rng)?;
    }

    let pools = [&vars.visit_pool_fw, &vars.visit_pool_bw];
    let mut pooled = [inputs; 2];
    let mut visit_probs = [inputs; 2];
    for k in 0..2 {
        if config.use_attention_pooling {
            let (s, p) = pool(tape, branches[k], &visit_valid, pools[k])?;
            pooled[k] = s;
            visit_probs[k] = p;
        } else {
            let s = masked_sum(tape, branches[k], &visit_valid, d)?;
            pooled[k] = s;
        }
    }

    let joined = tape.concat(&pooled)?;
    let joined = tape.reshape(joined, &[1, 2 * d])?;
    let logits = tape.matmul(joined, vars.classifier_wt)?;
    let logits = tape.reshape(logits, &[config.num_classes])?;
    let logits = tape.add_bias(logits, vars.classifier_b)?;

    Ok(ExampleGraph {
        logits,
        visits,
        branches,
        pooled,
        code_probs,
        visit_probs: config.use_attention_pooling.then_some(visit_probs),
        slots,
        code_slots,
    })
}

fn run_blocks(
    tape: &mut Tape<'_>,
    inputs: Var,
    mask: &Tensor,
    blocks: &[MsaVars],
    rate: f64,
    rng: &mut Option<&mut dyn RngCore>,
) -> Result<Var> {
    let mut h = inputs;
    for block in blocks {
        h = msa(tape, h, mask, block)?.0;
        if let Some(r) = rng {
            h = tape.dropout(h, rate, &mut **r)?;
        }
    }
    Ok(h)
}

/// Sum over the second-to-last axis restricted to valid rows.
fn masked_sum(tape: &mut Tape<'_>, x: Var, valid: &[bool], d: usize) -> Result<Var> {
    let shape = tape.value(x).shape().to_vec();
    let data = valid
        .iter()
        .flat_map(|&ok| std::iter::repeat_n(if ok { 1.0 } else { 0.0 }, d))
        .collect();
    let mask = tape.constant(Tensor::new(shape.clone(), data)?);
    let kept = tape.mul(x, mask)?;
    tape.sum_axis(kept, shape.len() - 2)
}

fn check_batch(params: &ModelParams, config: &ModelConfig) -> Result<()> {
    config.validate()?;
    params.check_shapes(config)
}

fn eval_rows<T: Send>(
    batch: &Batch,
    params: &ModelParams,
    config: &ModelConfig,
    layout: Layout,
    read: impl Fn(&Tape<'_>, &ExampleGraph) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    check_batch(params, config)?;
    (0..batch.size)
        .into_par_iter()
        .map(|b| {
            let mut tape = Tape::new();
            let vars = params.record(&mut tape)?;
            let graph = build_example(&mut tape, &vars, config, batch, b, layout, None)?;
            read(&tape, &graph)
        })
        .collect()
}

/// Eval-mode logits `[B×C]`.
pub fn forward(batch: &Batch, params: &ModelParams, config: &ModelConfig) -> Result<Tensor> {
    forward_with_layout(batch, params, config, Layout::Compact)
}

pub fn forward_with_layout(batch: &Batch, params: &ModelParams, config: &ModelConfig, layout: Layout) -> Result<Tensor> {
    let rows = eval_rows(batch, params, config, layout, |tape, g| Ok(tape.value(g.logits).data().to_vec()))?;
    Tensor::new([batch.size, config.num_classes], rows.concat())
}

/// Eval-mode visit embeddings `[B×m×d]`, zero on padded visits.
pub fn embed_visits(batch: &Batch, params: &ModelParams, config: &ModelConfig) -> Result<Tensor> {
    let rows = eval_rows(batch, params, config, Layout::Compact, |tape, g| {
        let mut v = tape.value(g.visits).data().to_vec();
        v.resize(batch.max_visits * config.d, 0.0);
        Ok(v)
    })?;
    Tensor::new([batch.size, batch.max_visits, config.d], rows.concat())
}

/// Intermediate eval-mode outputs of one example.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchOutputs {
    /// `[n×d]` per branch over the real visits.
    pub blocks: [Tensor; 2],
    /// `[d]` per branch.
    pub pooled: [Tensor; 2],
    pub logits: Tensor,
}

pub fn branch_outputs(batch: &Batch, params: &ModelParams, config: &ModelConfig) -> Result<Vec<BranchOutputs>> {
    eval_rows(batch, params, config, Layout::Compact, |tape, g| {
        Ok(BranchOutputs {
            blocks: g.branches.map(|v| tape.value(v).clone()),
            pooled: g.pooled.map(|v| tape.value(v).clone()),
            logits: tape.value(g.logits).clone(),
        })
    })
}

/// Attention probabilities and feature-averaged importances for one example,
/// laid out on the batch grid with masked entries at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub patient_id: String,
    pub visit_count: usize,
    /// `[m×d×k_max]`.
    pub code_pooling: Tensor,
    /// `[d×m]` per branch.
    pub visit_pooling_forward: Tensor,
    pub visit_pooling_backward: Tensor,
    /// `[m]` per branch.
    pub visit_importance_forward: Vec<f64>,
    pub visit_importance_backward: Vec<f64>,
    /// `[m][k_max]`.
    pub code_importance: Vec<Vec<f64>>,
}

/// Eval-mode attention records for every example of `batch`.
pub fn attention_records(batch: &Batch, params: &ModelParams, config: &ModelConfig) -> Result<Vec<AttentionRecord>> {
    if !config.use_attention_pooling {
        return Err(Error::Config("attention records need a model trained with attention pooling".into()));
    }
    eval_rows(batch, params, config, Layout::Padded, |tape, g| {
        let missing = || Error::Contract("attention probabilities were not recorded".into());
        let code = tape.value(g.code_probs.ok_or_else(missing)?).clone();
        let [fw, bw] = g.visit_probs.ok_or_else(missing)?.map(|v| tape.value(v).clone());
        let (m, d, k) = (g.slots, config.d, g.code_slots);
        let code_importance = (0..m)
            .map(|i| (0..k).map(|c| (0..d).map(|f| code.get(&[i, f, c])).sum::<f64>() / d as f64).collect())
            .collect();
        Ok(AttentionRecord {
            patient_id: String::new(),
            visit_count: 0,
            visit_importance_forward: feature_mean(&fw),
            visit_importance_backward: feature_mean(&bw),
            code_importance,
            code_pooling: code,
            visit_pooling_forward: fw,
            visit_pooling_backward: bw,
        })
    })
    .map(|mut records| {
        for (b, r) in records.iter_mut().enumerate() {
            r.patient_id = batch.patient_ids[b].clone();
            r.visit_count = batch.visit_count(b);
        }
        records
    })
}

/// Mean over the leading feature axis of a `[d×n]` probability table.
fn feature_mean(p: &Tensor) -> Vec<f64> {
    let (d, n) = (p.shape()[0], p.shape()[1]);
    (0..n).map(|i| (0..d).map(|k| p.get(&[k, i])).sum::<f64>() / d as f64).collect()
}
