use super::Tensor;
use crate::error::{Error, Result};

/// Additive mask value standing in for negative infinity.
pub const MASK_NEG: f64 = -1e9;

/// Mask entries at or below this value are treated as masked out.
pub const MASK_THRESHOLD: f64 = -5e8;

/// `[..×k] × [k×n] -> [..×n]`; leading axes of `a` are flattened into rows.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() < 2 || b.rank() != 2 || a.last_dim() != b.shape()[0] {
        return Err(Error::shape("matmul", a.shape(), b.shape()));
    }
    let k = a.last_dim();
    let n = b.shape()[1];
    let rows = a.numel() / k.max(1);
    let mut out = vec![0.0; rows * n];
    matmul_into(a.data(), b.data(), &mut out, rows, k, n);
    let mut shape = a.shape().to_vec();
    *shape.last_mut().unwrap() = n;
    Tensor::new(shape, out)
}

/// `out[rows×n] += a[rows×k] · b[k×n]`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], rows: usize, k: usize, n: usize) {
    for i in 0..rows {
        let orow = &mut out[i * n..(i + 1) * n];
        for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[t * n..(t + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[rows×k] += g[rows×n] · bᵀ` where `b` is `[k×n]`.
pub(crate) fn matmul_bt_into(g: &[f64], b: &[f64], out: &mut [f64], rows: usize, k: usize, n: usize) {
    for i in 0..rows {
        let grow = &g[i * n..(i + 1) * n];
        let orow = &mut out[i * k..(i + 1) * k];
        for (t, o) in orow.iter_mut().enumerate() {
            let brow = &b[t * n..(t + 1) * n];
            *o += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `out[k×n] += aᵀ · g` where `a` is `[rows×k]` and `g` is `[rows×n]`.
pub(crate) fn matmul_at_into(a: &[f64], g: &[f64], out: &mut [f64], rows: usize, k: usize, n: usize) {
    for i in 0..rows {
        let grow = &g[i * n..(i + 1) * n];
        for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[t * n..(t + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// Softmax along the last axis over entries whose mask is not the sentinel.
///
/// Masked entries come out as exactly zero; a row with every entry masked is
/// all zeros.
pub fn masked_softmax(scores: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if scores.shape() != mask.shape() || scores.rank() == 0 {
        return Err(Error::shape("masked_softmax", scores.shape(), mask.shape()));
    }
    let n = scores.last_dim();
    let mut out = vec![0.0; scores.numel()];
    for ((s, m), o) in scores
        .data()
        .chunks(n)
        .zip(mask.data().chunks(n))
        .zip(out.chunks_mut(n))
    {
        softmax_row(s, m, o);
    }
    Tensor::new(scores.shape().to_vec(), out)
}

pub(crate) fn softmax_row(scores: &[f64], mask: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (&s, &m) in scores.iter().zip(mask) {
        if m > MASK_THRESHOLD {
            max = max.max(s + m);
        }
    }
    if max == f64::NEG_INFINITY {
        out.fill(0.0);
        return;
    }
    let mut total = 0.0;
    for ((o, &s), &m) in out.iter_mut().zip(scores).zip(mask) {
        *o = if m > MASK_THRESHOLD { (s + m - max).exp() } else { 0.0 };
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Layer normalization over the last axis with learnable gain and bias.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    Ok(layer_norm_parts(x, gain, bias, eps)?.0)
}

/// Returns `(output, normalized input, 1/std per slice)`.
pub(crate) fn layer_norm_parts(
    x: &Tensor,
    gain: &Tensor,
    bias: &Tensor,
    eps: f64,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let d = x.last_dim();
    if x.rank() == 0 || d == 0 {
        return Err(Error::Contract("layer_norm needs a non-empty last axis".into()));
    }
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(Error::shape("layer_norm", x.shape(), gain.shape()));
    }
    let mut out = vec![0.0; x.numel()];
    let mut xhat = vec![0.0; x.numel()];
    let mut inv_std = Vec::with_capacity(x.numel() / d);
    for ((row, o), h) in x
        .data()
        .chunks(d)
        .zip(out.chunks_mut(d))
        .zip(xhat.chunks_mut(d))
    {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let r = 1.0 / (var + eps).sqrt();
        inv_std.push(r);
        for k in 0..d {
            h[k] = (row[k] - mean) * r;
            o[k] = gain.data()[k] * h[k] + bias.data()[k];
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, xhat, inv_std))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows)
    }

    #[test]
    fn matmul_identity() {
        let eye = t(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = t(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(matmul(&eye, &a).unwrap(), a);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        // 1*5 + 2*6 = 17, 3*5 + 4*6 = 39
        let a = t(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = t(&[vec![5.0], vec![6.0]]);
        assert_eq!(matmul(&a, &b).unwrap(), t(&[vec![17.0], vec![39.0]]));
    }

    #[test]
    fn matmul_mismatch_names_both_shapes() {
        let a = Tensor::zeros([2, 3]);
        let err = matmul(&a, &a).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_symmetric() {
        let p = masked_softmax(&Tensor::from_vec(vec![0.0, 0.0]), &Tensor::zeros([2])).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
    }

    #[test]
    fn softmax_single_survivor() {
        let p = masked_softmax(
            &Tensor::from_vec(vec![3.0, 1.0]),
            &Tensor::from_vec(vec![0.0, MASK_NEG]),
        )
        .unwrap();
        assert_eq!(p.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_all_masked_is_zero() {
        let p = masked_softmax(
            &Tensor::from_vec(vec![5.0, 7.0]),
            &Tensor::from_vec(vec![MASK_NEG, MASK_NEG]),
        )
        .unwrap();
        assert_eq!(p.data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_large_scores_stay_finite() {
        let p = masked_softmax(&Tensor::from_vec(vec![1e4, -1e4, 0.0]), &Tensor::zeros([3])).unwrap();
        assert!(p.all_finite());
        assert!((p.sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_constant_slice() {
        let y = layer_norm(&Tensor::ones([3]), &Tensor::ones([3]), &Tensor::zeros([3]), 1e-5).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn layer_norm_already_standardized() {
        // mean 0, population variance 1
        let y = layer_norm(
            &Tensor::from_vec(vec![-1.0, 1.0]),
            &Tensor::ones([2]),
            &Tensor::zeros([2]),
            0.0,
        )
        .unwrap();
        assert_eq!(y.data(), &[-1.0, 1.0]);
    }

    #[test]
    fn layer_norm_bias_passthrough() {
        let y = layer_norm(&Tensor::zeros([2]), &Tensor::ones([2]), &Tensor::full([2], 5.0), 1e-5).unwrap();
        assert_eq!(y.data(), &[5.0, 5.0]);
    }

    #[test]
    fn layer_norm_moments() {
        let x = Tensor::from_vec(vec![0.3, -2.0, 7.5, 1.25]);
        let y = layer_norm(&x, &Tensor::ones([4]), &Tensor::zeros([4]), 1e-5).unwrap();
        let mean = y.sum() / 4.0;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-5);
    }
}
