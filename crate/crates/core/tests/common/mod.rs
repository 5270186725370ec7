//! Naive reference implementations shared by the integration tests and the
//! acceptance suite. Everything here works on nested `Vec`s with explicit
//! loops and never calls the batched kernels.

#![allow(dead_code)]

use musanet::attention::{MsaParams, PoolingParams};
use musanet::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect()
}

fn at(t: &Tensor, r: usize, c: usize) -> f64 {
    t.data()[r * t.shape()[1] + c]
}

/// `W^T tanh(W1 x + W2 y + b1) + b` with `W` applied as `hidden · W`.
fn additive_multidim(
    w1: &Tensor,
    w2: Option<&Tensor>,
    b1: &Tensor,
    w: &Tensor,
    b: &Tensor,
    x: &[f64],
    y: &[f64],
) -> Vec<f64> {
    let d = x.len();
    let mut hidden = vec![0.0; d];
    for r in 0..d {
        let mut acc = b1.data()[r];
        for t in 0..d {
            acc += at(w1, r, t) * x[t];
            if let Some(w2) = w2 {
                acc += at(w2, r, t) * y[t];
            }
        }
        hidden[r] = acc.tanh();
    }
    let mut out = vec![0.0; d];
    for k in 0..d {
        let mut acc = b.data()[k];
        for r in 0..d {
            acc += hidden[r] * at(w, r, k);
        }
        out[k] = acc;
    }
    out
}

/// Softmax over entries with `open[i]`; all-closed gives zeros.
fn softmax_open(scores: &[f64], open: &[bool]) -> Vec<f64> {
    if !open.iter().any(|&o| o) {
        return vec![0.0; scores.len()];
    }
    let max = scores
        .iter()
        .zip(open)
        .filter(|(_, &o)| o)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .zip(open)
        .map(|(&s, &o)| if o { (s - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Pooling: returns `s[k]` and `p[k][i]`.
pub fn naive_pool(e: &[Vec<f64>], valid: &[bool], params: &PoolingParams) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = params.dim();
    let scores: Vec<Vec<f64>> = e
        .iter()
        .map(|x| additive_multidim(&params.w1, None, &params.b1, &params.w, &params.b, x, x))
        .collect();
    let mut p = vec![vec![0.0; e.len()]; d];
    let mut s = vec![0.0; d];
    for k in 0..d {
        let column: Vec<f64> = scores.iter().map(|row| row[k]).collect();
        p[k] = softmax_open(&column, valid);
        for i in 0..e.len() {
            s[k] += p[k][i] * e[i][k];
        }
    }
    (s, p)
}

/// Masked self-attention with `open[i][j]` saying whether source `i` feeds
/// target `j`. Returns `u[j][k]` and `p[j][k][i]`.
pub fn naive_msa(
    v: &[Vec<f64>],
    open: &[Vec<bool>],
    params: &MsaParams,
    eps: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
    let m = v.len();
    let d = params.dim();
    let mut u = vec![vec![0.0; d]; m];
    let mut p = vec![vec![vec![0.0; m]; d]; m];
    for j in 0..m {
        let f: Vec<Vec<f64>> = (0..m)
            .map(|i| additive_multidim(&params.w1, Some(&params.w2), &params.b1, &params.w, &params.b, &v[i], &v[j]))
            .collect();
        let column_open: Vec<bool> = (0..m).map(|i| open[i][j]).collect();
        let mut s = vec![0.0; d];
        for k in 0..d {
            let scores: Vec<f64> = (0..m).map(|i| f[i][k]).collect();
            p[j][k] = softmax_open(&scores, &column_open);
            for i in 0..m {
                s[k] += p[j][k][i] * v[i][k];
            }
        }
        let r: Vec<f64> = (0..d).map(|k| (v[j][k] + s[k]).max(0.0)).collect();
        let mean = r.iter().sum::<f64>() / d as f64;
        let var = r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d as f64;
        for k in 0..d {
            u[j][k] = params.ln_gain.data()[k] * (r[k] - mean) / (var + eps).sqrt() + params.ln_bias.data()[k];
        }
    }
    (u, p)
}

/// Average precision by recomputing precision and recall from scratch for
/// every prefix of the ranked list.
pub fn brute_pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    // insertion sort: descending score, earlier index first on ties
    for a in 1..n {
        let mut b = a;
        while b > 0 && scores[order[b]] > scores[order[b - 1]] {
            order.swap(b, b - 1);
            b -= 1;
        }
    }
    let total_pos = labels.iter().filter(|&&y| y).count() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for len in 1..=n {
        let tp = order[..len].iter().filter(|&&i| labels[i]).count() as f64;
        let precision = tp / len as f64;
        let recall = tp / total_pos;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// Random weights with nonzero biases and layer-norm parameters.
pub fn random_msa(d: usize, rng: &mut ChaCha8Rng) -> MsaParams {
    let mut p = MsaParams::random(d, 0.6, rng);
    p.b1 = Tensor::randn([d], 0.3, rng);
    p.b = Tensor::randn([d], 0.3, rng);
    p.ln_gain = Tensor::from_vec((0..d).map(|_| rng.random_range(0.5..1.5)).collect());
    p.ln_bias = Tensor::randn([d], 0.2, rng);
    p
}

pub fn random_pooling(d: usize, rng: &mut ChaCha8Rng) -> PoolingParams {
    let mut p = PoolingParams::random(d, 0.6, rng);
    p.b1 = Tensor::randn([d], 0.3, rng);
    p.b = Tensor::randn([d], 0.3, rng);
    p
}
