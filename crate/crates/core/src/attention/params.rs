use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Multi-dim pooling weights: `W1, W: [d×d]`, `b1, b: [d]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolingParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w: Tensor,
    pub b: Tensor,
}

impl PoolingParams {
    pub fn zeros(d: usize) -> Self {
        PoolingParams {
            w1: Tensor::zeros([d, d]),
            b1: Tensor::zeros([d]),
            w: Tensor::zeros([d, d]),
            b: Tensor::zeros([d]),
        }
    }

    /// Gaussian weights with the given standard deviation, zero biases.
    pub fn random<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        PoolingParams {
            w1: Tensor::randn([d, d], std, rng),
            b1: Tensor::zeros([d]),
            w: Tensor::randn([d, d], std, rng),
            b: Tensor::zeros([d]),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.numel()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w, &self.b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w, &mut self.b]
    }
}

/// Masked self-attention weights plus the layer-norm gain and bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsaParams {
    pub w1: Tensor,
    pub w2: Tensor,
    pub b1: Tensor,
    pub w: Tensor,
    pub b: Tensor,
    pub ln_gain: Tensor,
    pub ln_bias: Tensor,
}

impl MsaParams {
    pub fn zeros(d: usize) -> Self {
        MsaParams {
            w1: Tensor::zeros([d, d]),
            w2: Tensor::zeros([d, d]),
            b1: Tensor::zeros([d]),
            w: Tensor::zeros([d, d]),
            b: Tensor::zeros([d]),
            ln_gain: Tensor::ones([d]),
            ln_bias: Tensor::zeros([d]),
        }
    }

    pub fn random<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        MsaParams {
            w1: Tensor::randn([d, d], std, rng),
            w2: Tensor::randn([d, d], std, rng),
            w: Tensor::randn([d, d], std, rng),
            ..Self::zeros(d)
        }
    }

    pub fn dim(&self) -> usize {
        self.b.numel()
    }

    pub fn tensors(&self) -> [&Tensor; 7] {
        [&self.w1, &self.w2, &self.b1, &self.w, &self.b, &self.ln_gain, &self.ln_bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 7] {
        [
            &mut self.w1,
            &mut self.w2,
            &mut self.b1,
            &mut self.w,
            &mut self.b,
            &mut self.ln_gain,
            &mut self.ln_bias,
        ]
    }
}

/// Learned interval encodings, one `[d]` row per day offset `0..=L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalTable {
    pub table: Tensor,
}

impl IntervalTable {
    pub fn random<R: Rng + ?Sized>(d: usize, max_day: usize, std: f64, rng: &mut R) -> Self {
        IntervalTable {
            table: Tensor::randn([max_day + 1, d], std, rng),
        }
    }

    pub fn from_tensor(table: Tensor) -> Result<Self> {
        if table.rank() != 2 || table.shape()[0] == 0 {
            return Err(Error::Contract(format!("interval table must be [(L+1)×d], got {:?}", table.shape())));
        }
        Ok(IntervalTable { table })
    }

    /// Largest representable offset `L`; longer gaps share its row.
    pub fn max_day(&self) -> usize {
        self.table.shape()[0] - 1
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }
}

/// Single-score additive attention with a query vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveParams {
    pub w1: Tensor,
    pub w2: Tensor,
    pub b1: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
}

impl AdditiveParams {
    pub fn random<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        AdditiveParams {
            w1: Tensor::randn([d, d], std, rng),
            w2: Tensor::randn([d, d], std, rng),
            b1: vec![0.0; d],
            w: Tensor::randn([d], std, rng).into_data(),
            b: 0.0,
        }
    }
}
