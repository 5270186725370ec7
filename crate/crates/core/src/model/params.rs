use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::attention::{IntervalTable, MsaParams, MsaVars, PoolingParams, PoolingVars};
use crate::data::PAD_INDEX;
use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;

/// Every learned array of the network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `[vocab_size×d]`; the padding row stays zero.
    pub embedding: Tensor,
    pub code_pool: PoolingParams,
    pub interval: IntervalTable,
    pub forward: Vec<MsaParams>,
    pub backward: Vec<MsaParams>,
    pub visit_pool_fw: PoolingParams,
    pub visit_pool_bw: PoolingParams,
    /// `[C×2d]`.
    pub classifier_w: Tensor,
    /// `[C]`.
    pub classifier_b: Tensor,
}

/// Model parameters recorded on a tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub(crate) embedding: Var,
    pub(crate) code_pool: PoolingVars,
    pub(crate) interval: Var,
    pub(crate) forward: Vec<MsaVars>,
    pub(crate) backward: Vec<MsaVars>,
    pub(crate) visit_pool_fw: PoolingVars,
    pub(crate) visit_pool_bw: PoolingVars,
    pub(crate) classifier_wt: Var,
    pub(crate) classifier_b: Var,
    /// Leaves in [`ModelParams::tensors`] order.
    pub leaves: Vec<Var>,
}

impl ModelParams {
    /// Deterministic initialization: Gaussian weights, zero biases, unit
    /// layer-norm gains and a zero padding row.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d;
        let mut embedding = Tensor::randn([config.vocab_size, d], INIT_STD, &mut rng);
        zero_row(&mut embedding, PAD_INDEX as usize);
        let code_pool = PoolingParams::random(d, INIT_STD, &mut rng);
        let interval = IntervalTable::random(d, config.max_interval, INIT_STD, &mut rng);
        let forward = (0..config.depth)
            .map(|_| MsaParams::random(d, INIT_STD, &mut rng))
            .collect();
        let backward = (0..config.depth)
            .map(|_| MsaParams::random(d, INIT_STD, &mut rng))
            .collect();
        let visit_pool_fw = PoolingParams::random(d, INIT_STD, &mut rng);
        let visit_pool_bw = PoolingParams::random(d, INIT_STD, &mut rng);
        let classifier_w = Tensor::randn([config.num_classes, 2 * d], INIT_STD, &mut rng);
        Ok(ModelParams {
            embedding,
            code_pool,
            interval,
            forward,
            backward,
            visit_pool_fw,
            visit_pool_bw,
            classifier_w,
            classifier_b: Tensor::zeros([config.num_classes]),
        })
    }

    /// Same structure with every entry zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        out
    }

    /// All arrays in a fixed order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.embedding];
        out.extend(self.code_pool.tensors());
        out.push(&self.interval.table);
        for block in self.forward.iter().chain(&self.backward) {
            out.extend(block.tensors());
        }
        out.extend(self.visit_pool_fw.tensors());
        out.extend(self.visit_pool_bw.tensors());
        out.push(&self.classifier_w);
        out.push(&self.classifier_b);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.code_pool.tensors_mut());
        out.push(&mut self.interval.table);
        for block in self.forward.iter_mut().chain(self.backward.iter_mut()) {
            out.extend(block.tensors_mut());
        }
        out.extend(self.visit_pool_fw.tensors_mut());
        out.extend(self.visit_pool_bw.tensors_mut());
        out.push(&mut self.classifier_w);
        out.push(&mut self.classifier_b);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.numel()).sum()
    }

    /// Concatenation of every array in [`ModelParams::tensors`] order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    /// Inverse of [`ModelParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::shape("set_flat", &[flat.len()], &[self.parameter_count()]));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    /// Element-wise `self += other`.
    pub fn add_assign(&mut self, other: &ModelParams) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Restores the zero padding embedding.
    pub fn zero_padding_row(&mut self) {
        zero_row(&mut self.embedding, PAD_INDEX as usize);
    }

    /// Checks that the arrays have the shapes `config` implies.
    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let reference = ModelParams::zeros_for(config);
        let ours = self.tensors();
        let theirs = reference.tensors();
        if ours.len() != theirs.len() {
            return Err(Error::Contract(format!(
                "parameter set has {} arrays, config implies {}",
                ours.len(),
                theirs.len()
            )));
        }
        for (a, b) in ours.iter().zip(&theirs) {
            if a.shape() != b.shape() {
                return Err(Error::shape("parameters", a.shape(), b.shape()));
            }
        }
        Ok(())
    }

    fn zeros_for(config: &ModelConfig) -> Self {
        let d = config.d;
        ModelParams {
            embedding: Tensor::zeros([config.vocab_size, d]),
            code_pool: PoolingParams::zeros(d),
            interval: IntervalTable {
                table: Tensor::zeros([config.max_interval + 1, d]),
            },
            forward: vec![MsaParams::zeros(d); config.depth],
            backward: vec![MsaParams::zeros(d); config.depth],
            visit_pool_fw: PoolingParams::zeros(d),
            visit_pool_bw: PoolingParams::zeros(d),
            classifier_w: Tensor::zeros([config.num_classes, 2 * d]),
            classifier_b: Tensor::zeros([config.num_classes]),
        }
    }

    /// Registers every array as a tape leaf.
    pub fn record<'p>(&'p self, tape: &mut Tape<'p>) -> Result<ParamVars> {
        let mut leaves = Vec::new();
        let embedding = tape.param(&self.embedding);
        leaves.push(embedding);
        let code_pool = self.code_pool.record(tape, &mut leaves)?;
        let interval = tape.param(&self.interval.table);
        leaves.push(interval);
        let forward = self
            .forward
            .iter()
            .map(|b| b.record(tape, &mut leaves))
            .collect::<Result<_>>()?;
        let backward = self
            .backward
            .iter()
            .map(|b| b.record(tape, &mut leaves))
            .collect::<Result<_>>()?;
        let visit_pool_fw = self.visit_pool_fw.record(tape, &mut leaves)?;
        let visit_pool_bw = self.visit_pool_bw.record(tape, &mut leaves)?;
        let classifier_w = tape.param(&self.classifier_w);
        let classifier_b = tape.param(&self.classifier_b);
        leaves.extend([classifier_w, classifier_b]);
        Ok(ParamVars {
            embedding,
            code_pool,
            interval,
            forward,
            backward,
            visit_pool_fw,
            visit_pool_bw,
            classifier_wt: tape.transpose(classifier_w)?,
            classifier_b,
            leaves,
        })
    }
}

fn zero_row(t: &mut Tensor, row: usize) {
    let d = t.last_dim();
    t.data_mut()[row * d..(row + 1) * d].fill(0.0);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> ModelConfig {
        ModelConfig {
            d: 8,
            vocab_size: 20,
            max_interval: 30,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_params() {
        assert_eq!(ModelParams::init(&config(), 3).unwrap(), ModelParams::init(&config(), 3).unwrap());
        assert_ne!(ModelParams::init(&config(), 3).unwrap(), ModelParams::init(&config(), 4).unwrap());
    }

    #[test]
    fn padding_row_is_zero() {
        let p = ModelParams::init(&config(), 1).unwrap();
        assert!(p.embedding.row(0).iter().all(|&x| x == 0.0));
        assert!(p.embedding.row(1).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn count_matches_closed_form() {
        for depth in [1, 2] {
            let cfg = ModelConfig { depth, ..config() };
            let p = ModelParams::init(&cfg, 0).unwrap();
            assert_eq!(p.parameter_count(), cfg.parameter_count());
            p.check_shapes(&cfg).unwrap();
        }
        let big = ModelConfig { vocab_size: 2000, ..Default::default() };
        assert_eq!(ModelParams::init(&big, 0).unwrap().parameter_count(), big.parameter_count());
    }

    #[test]
    fn biases_and_gains() {
        let p = ModelParams::init(&config(), 1).unwrap();
        assert!(p.forward[0].ln_gain.data().iter().all(|&x| x == 1.0));
        assert!(p.classifier_b.data().iter().all(|&x| x == 0.0));
        assert!(p.code_pool.b1.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn leaves_follow_tensor_order() {
        let p = ModelParams::init(&config(), 1).unwrap();
        let mut tape = Tape::new();
        let vars = p.record(&mut tape).unwrap();
        assert_eq!(vars.leaves.len(), p.tensors().len());
        for (leaf, t) in vars.leaves.iter().zip(p.tensors()) {
            assert_eq!(tape.value(*leaf), t);
        }
    }
}
