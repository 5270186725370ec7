//! Feature-wise (multi-dim) additive attention: pooling, masked
//! self-attention with directional masks, and interval encoding.
//!
//! Weight matrices follow the column-vector convention: a compatibility
//! score is `Wᵀ tanh(W1·v_i + W2·v_j + b1) + b`. Inputs are stored as rows, so
//! the layers compute `tanh(v_i·W1ᵀ + v_j·W2ᵀ + b1)·W + b`.

mod mask;
mod params;

pub use mask::{Direction, PositionalMask};
pub use params::{AdditiveParams, IntervalTable, MsaParams, PoolingParams};

use crate::error::{Error, Result};
use crate::tensor::{masked_softmax, Tape, Tensor, Var, MASK_NEG};

/// Layer-norm epsilon used by every masked self-attention block.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Pooling parameters recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct PoolingVars {
    w1t: Var,
    b1: Var,
    w: Var,
    b: Var,
}

impl PoolingParams {
    /// Records the weights as tape leaves, appending them to `leaves` in
    /// [`PoolingParams::tensors`] order.
    pub fn record<'p>(&'p self, tape: &mut Tape<'p>, leaves: &mut Vec<Var>) -> Result<PoolingVars> {
        let [w1, b1, w, b] = self.tensors().map(|t| tape.param(t));
        leaves.extend([w1, b1, w, b]);
        Ok(PoolingVars {
            w1t: tape.transpose(w1)?,
            b1,
            w,
            b,
        })
    }
}

/// Masked self-attention parameters recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct MsaVars {
    w1t: Var,
    w2t: Var,
    b1: Var,
    w: Var,
    b: Var,
    gain: Var,
    bias: Var,
}

impl MsaParams {
    /// Records the weights as tape leaves, appending them to `leaves` in
    /// [`MsaParams::tensors`] order.
    pub fn record<'p>(&'p self, tape: &mut Tape<'p>, leaves: &mut Vec<Var>) -> Result<MsaVars> {
        let [w1, w2, b1, w, b, gain, bias] = self.tensors().map(|t| tape.param(t));
        leaves.extend([w1, w2, b1, w, b, gain, bias]);
        Ok(MsaVars {
            w1t: tape.transpose(w1)?,
            w2t: tape.transpose(w2)?,
            b1,
            w,
            b,
            gain,
            bias,
        })
    }
}

/// Expands a `[..×n]` validity mask to the additive `[..×d×n]` score mask.
fn pooling_mask(valid: &[bool], n: usize, d: usize) -> Result<Tensor> {
    if n == 0 || valid.len() % n != 0 {
        return Err(Error::Contract(format!("mask length {} not a multiple of {n}", valid.len())));
    }
    let lead = valid.len() / n;
    let mut data = Vec::with_capacity(lead * d * n);
    for row in valid.chunks(n) {
        for _ in 0..d {
            data.extend(row.iter().map(|&ok| if ok { 0.0 } else { MASK_NEG }));
        }
    }
    Tensor::new([lead, d, n], data)
}

/// Attention pooling over the second-to-last axis.
///
/// `x` is `[..×n×d]` and `valid` flags the real rows (`[..×n]` row-major).
/// Returns the pooled `[..×d]` vectors and the probabilities `[..×d×n]`,
/// where each feature row is a distribution over valid positions.
pub fn pool(tape: &mut Tape<'_>, x: Var, valid: &[bool], params: &PoolingVars) -> Result<(Var, Var)> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() < 2 {
        return Err(Error::Contract(format!("pooling input must be [..×n×d], got {shape:?}")));
    }
    let (n, d) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    if valid.len() * d != tape.value(x).numel() {
        return Err(Error::shape("attention_pool mask", &shape, &[valid.len()]));
    }
    let h = tape.matmul(x, params.w1t)?;
    let h = tape.add_bias(h, params.b1)?;
    let h = tape.tanh(h);
    let s = tape.matmul(h, params.w)?;
    let s = tape.add_bias(s, params.b)?;
    let s = tape.swap_last2(s)?;
    let mut mask = pooling_mask(valid, n, d)?;
    let mut p_shape = shape[..shape.len() - 2].to_vec();
    p_shape.extend([d, n]);
    mask = mask.reshape(p_shape)?;
    let p = tape.masked_softmax(s, &mask)?;
    let out = tape.feature_weighted_sum(p, x)?;
    Ok((out, p))
}

/// Masked self-attention block over `v: [m×d]`.
///
/// `score_mask` is `[m×m]` indexed `[i][j]` (source `i`, target `j`) and
/// holds `0` or [`MASK_NEG`]; padding must already be folded in. Returns
/// `u = LayerNorm(ReLU(v + s))` and the probabilities `[m×d×m]` indexed
/// `[j][k][i]`.
pub fn msa(tape: &mut Tape<'_>, v: Var, score_mask: &Tensor, params: &MsaVars) -> Result<(Var, Var)> {
    let shape = tape.value(v).shape().to_vec();
    if shape.len() != 2 || score_mask.shape() != [shape[0], shape[0]] {
        return Err(Error::shape("msa", &shape, score_mask.shape()));
    }
    let (m, d) = (shape[0], shape[1]);
    let sources = tape.matmul(v, params.w1t)?;
    let targets = tape.matmul(v, params.w2t)?;
    let targets = tape.add_bias(targets, params.b1)?;
    let h = tape.pair_add(sources, targets)?;
    let h = tape.tanh(h);
    let f = tape.matmul(h, params.w)?;
    let f = tape.add_bias(f, params.b)?;
    let f = tape.swap_last2(f)?;

    let mut mask = Vec::with_capacity(m * d * m);
    for j in 0..m {
        for _ in 0..d {
            mask.extend((0..m).map(|i| score_mask.get(&[i, j])));
        }
    }
    let p = tape.masked_softmax(f, &Tensor::new([m, d, m], mask)?)?;
    let s = tape.feature_weighted_sum(p, v)?;
    let r = tape.add(v, s)?;
    let r = tape.relu(r);
    let u = tape.layer_norm(r, params.gain, params.bias, LAYER_NORM_EPS)?;
    Ok((u, p))
}

/// Combines a positional mask with source padding into a `[m×m]` score mask.
pub fn score_mask(pos: Option<&PositionalMask>, valid: &[bool]) -> Result<Tensor> {
    let m = valid.len();
    let mut out = match pos {
        Some(p) if p.size() != m => return Err(Error::shape("score_mask", &[p.size()], &[m])),
        Some(p) => p.matrix().clone(),
        None => Tensor::zeros([m, m]),
    };
    for (i, &ok) in valid.iter().enumerate() {
        if !ok {
            for j in 0..m {
                out.set(&[i, j], out.get(&[i, j]) + MASK_NEG);
            }
        }
    }
    Ok(out)
}

/// Looks up interval encodings for temporal positions, clamped to the table.
pub fn interval_encode_var<'p>(tape: &mut Tape<'p>, table: Var, positions: &[u32], max_day: usize) -> Result<Var> {
    let rows: Vec<usize> = positions.iter().map(|&p| (p as usize).min(max_day)).collect();
    tape.gather(table, &rows)
}

/// Standalone pooling: returns `s: [d]` and `P: [d×n]`.
pub fn attention_pool(e: &Tensor, valid: &[bool], params: &PoolingParams) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, &mut Vec::new())?;
    let x = tape.constant(e.clone());
    let (s, p) = pool(&mut tape, x, valid, &vars)?;
    Ok((tape.value(s).clone(), tape.value(p).clone()))
}

/// Standalone masked self-attention: returns `U: [m×d]` and `P: [m×d×m]`.
pub fn msa_forward(
    v: &Tensor,
    pos: Option<&PositionalMask>,
    valid: &[bool],
    params: &MsaParams,
) -> Result<(Tensor, Tensor)> {
    let mask = score_mask(pos, valid)?;
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, &mut Vec::new())?;
    let x = tape.constant(v.clone());
    let (u, p) = msa(&mut tape, x, &mask, &vars)?;
    Ok((tape.value(u).clone(), tape.value(p).clone()))
}

/// Multi-dim compatibility `Wᵀ tanh(W1·v_i + W2·v_j + b1) + b` for one pair.
pub fn compat_multidim(vi: &[f64], vj: &[f64], params: &MsaParams) -> Result<Vec<f64>> {
    let d = params.dim();
    if vi.len() != d || vj.len() != d {
        return Err(Error::shape("compat_multidim", &[vi.len()], &[vj.len()]));
    }
    let hidden: Vec<f64> = (0..d)
        .map(|r| {
            let a: f64 = (0..d).map(|t| params.w1.get(&[r, t]) * vi[t]).sum();
            let b: f64 = (0..d).map(|t| params.w2.get(&[r, t]) * vj[t]).sum();
            (a + b + params.b1.data()[r]).tanh()
        })
        .collect();
    Ok((0..d)
        .map(|k| (0..d).map(|r| params.w.get(&[r, k]) * hidden[r]).sum::<f64>() + params.b.data()[k])
        .collect())
}

/// All-pairs compatibility scores `[m×m×d]` indexed `[j][i]`, via the tape kernels.
pub fn compat_all_pairs(v: &Tensor, params: &MsaParams) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = params.record(&mut tape, &mut Vec::new())?;
    let x = tape.constant(v.clone());
    let sources = tape.matmul(x, vars.w1t)?;
    let targets = tape.matmul(x, vars.w2t)?;
    let targets = tape.add_bias(targets, vars.b1)?;
    let h = tape.pair_add(sources, targets)?;
    let h = tape.tanh(h);
    let f = tape.matmul(h, vars.w)?;
    let f = tape.add_bias(f, vars.b)?;
    Ok(tape.value(f).clone())
}

/// Interval encodings `[m×d]`: row `i` is table row `min(p_i, L)`.
pub fn interval_encode(positions: &[u32], table: &IntervalTable) -> Result<Tensor> {
    let mut tape = Tape::new();
    let t = tape.param(&table.table);
    let out = interval_encode_var(&mut tape, t, positions, table.max_day())?;
    Ok(tape.value(out).clone())
}

/// Vanilla additive attention with a query: scalar scores, softmax weights,
/// weighted average of the rows of `v: [n×d]`.
pub fn additive_attention(v: &Tensor, q: &[f64], params: &AdditiveParams) -> Result<Tensor> {
    let d = params.w.len();
    if v.rank() != 2 || v.shape()[1] != d || q.len() != d || v.shape()[0] == 0 {
        return Err(Error::shape("additive_attention", v.shape(), &[q.len()]));
    }
    let n = v.shape()[0];
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let vi = v.row(i);
            (0..d)
                .map(|r| {
                    let a: f64 = (0..d).map(|t| params.w1.get(&[r, t]) * vi[t]).sum();
                    let b: f64 = (0..d).map(|t| params.w2.get(&[r, t]) * q[t]).sum();
                    params.w[r] * (a + b + params.b1[r]).tanh()
                })
                .sum::<f64>()
                + params.b
        })
        .collect();
    let p = masked_softmax(&Tensor::from_vec(scores), &Tensor::zeros([n]))?;
    let mut out = vec![0.0; d];
    for (i, &pi) in p.data().iter().enumerate() {
        for (o, x) in out.iter_mut().zip(v.row(i)) {
            *o += pi * x;
        }
    }
    Ok(Tensor::from_vec(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn compat_constant_bias() {
        let mut p = MsaParams::zeros(3);
        p.b = Tensor::from_vec(vec![0.7; 3]);
        let f = compat_multidim(&[1.0, -2.0, 3.0], &[0.5, 0.5, 0.5], &p).unwrap();
        assert_eq!(f, vec![0.7; 3]);
    }

    #[test]
    fn compat_scalar_formula() {
        let mut p = MsaParams::zeros(1);
        p.w1 = Tensor::ones([1, 1]);
        p.w2 = Tensor::ones([1, 1]);
        p.w = Tensor::ones([1, 1]);
        let f = compat_multidim(&[1.0], &[1.0], &p).unwrap();
        assert!((f[0] - 2f64.tanh()).abs() < 1e-15);
        assert!((f[0] - 0.9640).abs() < 1e-4);
    }

    #[test]
    fn compat_batched_matches_pairwise() {
        let p = MsaParams::random(4, 0.5, &mut rng());
        let v = Tensor::randn([3, 4], 1.0, &mut rng());
        let all = compat_all_pairs(&v, &p).unwrap();
        for j in 0..3 {
            for i in 0..3 {
                let f = compat_multidim(v.row(i), v.row(j), &p).unwrap();
                for k in 0..4 {
                    assert!((all.get(&[j, i, k]) - f[k]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pool_single_element_is_identity() {
        let p = PoolingParams::random(3, 0.5, &mut rng());
        let e = Tensor::from_rows(&[vec![0.3, -1.0, 2.0]]);
        let (s, probs) = attention_pool(&e, &[true], &p).unwrap();
        assert_eq!(s.data(), e.data());
        assert_eq!(probs.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn pool_identical_rows_split_evenly() {
        let p = PoolingParams::random(2, 0.5, &mut rng());
        let e = Tensor::from_rows(&[vec![1.5, -0.5], vec![1.5, -0.5]]);
        let (s, probs) = attention_pool(&e, &[true, true], &p).unwrap();
        assert!(probs.data().iter().all(|&x| x == 0.5));
        assert_eq!(s.data(), &[1.5, -0.5]);
    }

    #[test]
    fn pool_all_masked_is_zero() {
        let p = PoolingParams::random(2, 0.5, &mut rng());
        let e = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let (s, probs) = attention_pool(&e, &[false, false], &p).unwrap();
        assert_eq!(s.data(), &[0.0, 0.0]);
        assert!(probs.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn msa_first_forward_position_has_empty_context() {
        let p = MsaParams::random(3, 0.5, &mut rng());
        let v = Tensor::randn([3, 3], 1.0, &mut rng());
        let fw = PositionalMask::new(3, Direction::Forward).unwrap();
        let (u, probs) = msa_forward(&v, Some(&fw), &[true; 3], &p).unwrap();
        let expected = crate::tensor::layer_norm(
            &Tensor::from_vec(v.row(0).iter().map(|x| x.max(0.0)).collect()),
            &p.ln_gain,
            &p.ln_bias,
            LAYER_NORM_EPS,
        )
        .unwrap();
        assert_eq!(u.row(0), expected.data());
        assert!((0..3).all(|k| (0..3).all(|i| probs.get(&[0, k, i]) == 0.0)));
    }

    #[test]
    fn msa_two_forward_copies_predecessor() {
        let p = MsaParams::random(2, 0.5, &mut rng());
        let v = Tensor::from_rows(&[vec![0.4, -0.3], vec![1.0, 2.0]]);
        let fw = PositionalMask::new(2, Direction::Forward).unwrap();
        let (_, probs) = msa_forward(&v, Some(&fw), &[true; 2], &p).unwrap();
        // position 2 sees only position 1 with probability one
        for k in 0..2 {
            assert_eq!(probs.get(&[1, k, 0]), 1.0);
            assert_eq!(probs.get(&[1, k, 1]), 0.0);
        }
    }

    #[test]
    fn interval_clamps_and_repeats() {
        let t = IntervalTable::random(4, 10, 0.02, &mut rng());
        let e = interval_encode(&[0, 0], &t).unwrap();
        assert_eq!(e.row(0), e.row(1));
        assert_eq!(e.row(0), t.table.row(0));
        let far = interval_encode(&[110], &t).unwrap();
        let edge = interval_encode(&[10], &t).unwrap();
        assert_eq!(far, edge);
    }

    #[test]
    fn additive_single_row() {
        let p = AdditiveParams::random(3, 0.5, &mut rng());
        let v = Tensor::from_rows(&[vec![1.0, 2.0, 3.0]]);
        let out = additive_attention(&v, &[0.1, 0.2, 0.3], &p).unwrap();
        assert_eq!(out.data(), v.data());
    }

    #[test]
    fn additive_equal_scores_average() {
        let p = AdditiveParams {
            w1: Tensor::zeros([2, 2]),
            w2: Tensor::zeros([2, 2]),
            b1: vec![0.0; 2],
            w: vec![1.0; 2],
            b: 0.0,
        };
        let v = Tensor::from_rows(&[vec![1.0, 3.0], vec![3.0, 5.0]]);
        let out = additive_attention(&v, &[0.0, 0.0], &p).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0]);
    }
}
