use std::borrow::Cow;

use super::ops::{layer_norm_parts, masked_softmax, matmul, matmul_at_into, matmul_bt_into};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SwapLast2(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    SumAll(Var),
    SumAxis(Var, usize),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    PairAdd(Var, Var),
    MaskedSoftmax(Var),
    LogSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    FeatureWeightedSum(Var, Var),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Linear record of executed operations.
///
/// Parameters may be borrowed for the lifetime `'p` so that large tables are
/// not copied per example. Every recorded node is visited at most once during
/// [`Tape::backward`], in reverse recording order.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Adjoints of the loss with respect to every differentiable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when the loss does not depend on it.
    pub fn take_or_zeros(&mut self, v: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(v.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable leaf borrowed from the caller.
    pub fn param(&mut self, t: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Records a differentiable leaf owned by the tape.
    pub fn param_owned(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, true)
    }

    /// Records a leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Cow::Owned(value), op, needs_grad)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let value = self.value(x).map(f);
        self.record(value, op, &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        Ok(self.record(value, Op::MatMul(a, b), &[a, b]))
    }

    /// Transpose of a rank-2 value.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose()?;
        Ok(self.record(value, Op::SwapLast2(x), &[x]))
    }

    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).swap_last2()?;
        Ok(self.record(value, Op::SwapLast2(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape.to_vec())?;
        Ok(self.record(value, Op::Reshape(x), &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.record(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.record(value, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).mul(self.value(b))?;
        Ok(self.record(value, Op::Mul(a, b), &[a, b]))
    }

    /// Broadcast add of a `[d]` vector over every last-axis slice of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let d = xv.last_dim();
        if xv.rank() == 0 || bv.shape() != [d] {
            return Err(Error::shape("add_bias", xv.shape(), bv.shape()));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(d) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.record(value, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    /// Inverted dropout: zeroes entries with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`. A zero rate records nothing.
    pub fn dropout<R: rand::Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(Error::Config(format!("dropout rate {rate} must be below 1")));
        }
        let keep = 1.0 / (1.0 - rate);
        let shape = self.value(x).shape().to_vec();
        let n = self.value(x).numel();
        let mask: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        let m = self.constant(Tensor::new(shape, mask)?);
        self.mul(x, m)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.record(value, Op::SumAll(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Sum over `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        if axis >= xv.rank() {
            return Err(Error::Contract(format!(
                "sum_axis: axis {axis} out of range for {:?}",
                xv.shape()
            )));
        }
        let (outer, len, inner) = split_axis(xv.shape(), axis);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let src = &xv.data()[(o * len + a) * inner..(o * len + a + 1) * inner];
                for (dst, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += s;
                }
            }
        }
        let mut shape = xv.shape().to_vec();
        shape.remove(axis);
        let value = Tensor::new(shape, out)?;
        Ok(self.record(value, Op::SumAxis(x, axis), &[x]))
    }

    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let len = self.value(x).shape().get(axis).copied().unwrap_or(1).max(1);
        let s = self.sum_axis(x, axis)?;
        Ok(self.scale(s, 1.0 / len as f64))
    }

    /// Concatenation along the last axis; leading shapes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let lead = {
            let s = self.value(*first).shape();
            s[..s.len().saturating_sub(1)].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.is_empty() || s[..s.len() - 1] != lead[..] {
                return Err(Error::shape("concat", self.value(*first).shape(), s));
            }
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead;
        shape.push(total);
        let value = Tensor::new(shape, out)?;
        Ok(self.record(value, Op::Concat(parts.to_vec()), parts))
    }

    /// Row lookup into a rank-2 table: `[V×d]` -> `[indices.len()×d]`.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(Error::Contract(format!(
                "gather needs a rank-2 table, got {:?}",
                tv.shape()
            )));
        }
        let (rows, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            if i >= rows {
                return Err(Error::Contract(format!("gather index {i} out of range {rows}")));
            }
            out.extend_from_slice(tv.row(i));
        }
        let value = Tensor::new([indices.len(), d], out)?;
        Ok(self.record(value, Op::Gather(table, indices.to_vec()), &[table]))
    }

    /// `a: [n×d]`, `b: [m×d]` -> `[m×n×d]` with `out[j][i] = a[i] + b[j]`.
    pub fn pair_add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1] {
            return Err(Error::shape("pair_add", av.shape(), bv.shape()));
        }
        let (n, m, d) = (av.shape()[0], bv.shape()[0], av.shape()[1]);
        let mut out = Vec::with_capacity(m * n * d);
        for j in 0..m {
            let brow = bv.row(j);
            for i in 0..n {
                out.extend(av.row(i).iter().zip(brow).map(|(x, y)| x + y));
            }
        }
        let value = Tensor::new([m, n, d], out)?;
        Ok(self.record(value, Op::PairAdd(a, b), &[a, b]))
    }

    /// Softmax along the last axis under a constant additive mask.
    pub fn masked_softmax(&mut self, scores: Var, mask: &Tensor) -> Result<Var> {
        let value = masked_softmax(self.value(scores), mask)?;
        Ok(self.record(value, Op::MaskedSoftmax(scores), &[scores]))
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() == 0 {
            return Err(Error::Contract("log_softmax of a scalar".into()));
        }
        let n = xv.last_dim();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let value = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.record(value, Op::LogSoftmax(x), &[x]))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (value, xhat, inv_std) =
            layer_norm_parts(self.value(x), self.value(gain), self.value(bias), eps)?;
        Ok(self.record(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Feature-wise attention readout.
    ///
    /// `p: [..×d×n]` holds per-feature distributions over `n` sources; `x` is
    /// either `[..×n×d]` (one source set per leading index) or `[n×d]`
    /// (shared). Returns `[..×d]` with `out[.., k] = Σ_i p[.., k, i]·x[.., i, k]`.
    pub fn feature_weighted_sum(&mut self, p: Var, x: Var) -> Result<Var> {
        let (pv, xv) = (self.value(p), self.value(x));
        let (lead, d, n) = fws_dims(pv.shape(), xv.shape())?;
        let shared = xv.rank() == 2 && pv.rank() != 2;
        let mut out = vec![0.0; lead * d];
        for b in 0..lead {
            let xb = if shared { 0 } else { b * n * d };
            for k in 0..d {
                let prow = &pv.data()[(b * d + k) * n..(b * d + k + 1) * n];
                let mut acc = 0.0;
                for (i, &pw) in prow.iter().enumerate() {
                    acc += pw * xv.data()[xb + i * d + k];
                }
                out[b * d + k] = acc;
            }
        }
        let shape = pv.shape()[..pv.rank() - 1].to_vec();
        let value = Tensor::new(shape, out)?;
        Ok(self.record(value, Op::FeatureWeightedSum(p, x), &[p, x]))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(lv.shape().to_vec()));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        let node = &self.nodes[v.0];
        if !node.needs_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(node.value.shape().to_vec()));
        f(slot.data_mut());
    }

    fn propagate(&self, node: &Node<'p>, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let gd = g.data();
        let y = node.value.as_ref();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = av.last_dim();
                let n = bv.shape()[1];
                let rows = av.numel() / k.max(1);
                self.accumulate(grads, *a, |ga| matmul_bt_into(gd, bv.data(), ga, rows, k, n));
                self.accumulate(grads, *b, |gb| matmul_at_into(av.data(), gd, gb, rows, k, n));
            }
            Op::SwapLast2(x) => {
                let back = g.swap_last2()?;
                self.accumulate(grads, *x, |gx| add_into(gx, back.data()));
            }
            Op::Reshape(x) => self.accumulate(grads, *x, |gx| add_into(gx, gd)),
            Op::Add(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, gd));
                self.accumulate(grads, *b, |gb| add_into(gb, gd));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, |ga| add_into(ga, gd));
                self.accumulate(grads, *b, |gb| {
                    for (o, v) in gb.iter_mut().zip(gd) {
                        *o -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate(grads, *a, |ga| {
                    for ((o, gv), bv) in ga.iter_mut().zip(gd).zip(bv) {
                        *o += gv * bv;
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for ((o, gv), av) in gb.iter_mut().zip(gd).zip(av) {
                        *o += gv * av;
                    }
                });
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, |gx| add_into(gx, gd));
                let d = y.last_dim();
                self.accumulate(grads, *b, |gb| {
                    for row in gd.chunks(d) {
                        add_into(gb, row);
                    }
                });
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, |gx| {
                for (o, v) in gx.iter_mut().zip(gd) {
                    *o += s * v;
                }
            }),
            Op::Relu(x) => self.elementwise(grads, *x, gd, y.data(), |_, yv| if yv > 0.0 { 1.0 } else { 0.0 }),
            Op::Tanh(x) => self.elementwise(grads, *x, gd, y.data(), |_, yv| 1.0 - yv * yv),
            Op::Sigmoid(x) => self.elementwise(grads, *x, gd, y.data(), |_, yv| yv * (1.0 - yv)),
            Op::Exp(x) => self.elementwise(grads, *x, gd, y.data(), |_, yv| yv),
            Op::Log(x) => self.elementwise(grads, *x, gd, y.data(), |xv, _| 1.0 / xv),
            Op::Softplus(x) => self.elementwise(grads, *x, gd, y.data(), |xv, _| sigmoid(xv)),
            Op::SumAll(x) => {
                let s = gd[0];
                self.accumulate(grads, *x, |gx| gx.iter_mut().for_each(|o| *o += s));
            }
            Op::SumAxis(x, axis) => {
                let (outer, len, inner) = split_axis(self.value(*x).shape(), *axis);
                self.accumulate(grads, *x, |gx| {
                    for o in 0..outer {
                        let src = &gd[o * inner..(o + 1) * inner];
                        for a in 0..len {
                            add_into(&mut gx[(o * len + a) * inner..(o * len + a + 1) * inner], src);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let total = y.last_dim();
                let rows = y.numel() / total.max(1);
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    self.accumulate(grads, p, |gp| {
                        for r in 0..rows {
                            add_into(&mut gp[r * w..(r + 1) * w], &gd[r * total + offset..r * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::Gather(table, indices) => {
                let d = y.last_dim();
                self.accumulate(grads, *table, |gt| {
                    for (r, &i) in indices.iter().enumerate() {
                        add_into(&mut gt[i * d..(i + 1) * d], &gd[r * d..(r + 1) * d]);
                    }
                });
            }
            Op::PairAdd(a, b) => {
                let (m, n, d) = (y.shape()[0], y.shape()[1], y.shape()[2]);
                self.accumulate(grads, *a, |ga| {
                    for j in 0..m {
                        for i in 0..n {
                            add_into(&mut ga[i * d..(i + 1) * d], &gd[(j * n + i) * d..(j * n + i + 1) * d]);
                        }
                    }
                });
                self.accumulate(grads, *b, |gb| {
                    for j in 0..m {
                        for i in 0..n {
                            add_into(&mut gb[j * d..(j + 1) * d], &gd[(j * n + i) * d..(j * n + i + 1) * d]);
                        }
                    }
                });
            }
            Op::MaskedSoftmax(x) => {
                let n = y.last_dim();
                self.accumulate(grads, *x, |gx| {
                    for ((o, yr), gr) in gx.chunks_mut(n).zip(y.data().chunks(n)).zip(gd.chunks(n)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((o, &yv), &gv) in o.iter_mut().zip(yr).zip(gr) {
                            *o += yv * (gv - dot);
                        }
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let n = y.last_dim();
                self.accumulate(grads, *x, |gx| {
                    for ((o, yr), gr) in gx.chunks_mut(n).zip(y.data().chunks(n)).zip(gd.chunks(n)) {
                        let total: f64 = gr.iter().sum();
                        for ((o, &yv), &gv) in o.iter_mut().zip(yr).zip(gr) {
                            *o += gv - yv.exp() * total;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = y.last_dim();
                let gain_v = self.value(*gain).data();
                self.accumulate(grads, *gain, |gg| {
                    for (gr, hr) in gd.chunks(d).zip(xhat.chunks(d)) {
                        for k in 0..d {
                            gg[k] += gr[k] * hr[k];
                        }
                    }
                });
                self.accumulate(grads, *bias, |gb| {
                    for gr in gd.chunks(d) {
                        add_into(gb, gr);
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    let mut gh = vec![0.0; d];
                    for (((o, gr), hr), &r) in gx.chunks_mut(d).zip(gd.chunks(d)).zip(xhat.chunks(d)).zip(inv_std) {
                        for k in 0..d {
                            gh[k] = gr[k] * gain_v[k];
                        }
                        let mean_g = gh.iter().sum::<f64>() / d as f64;
                        let mean_gh = gh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for k in 0..d {
                            o[k] += r * (gh[k] - mean_g - hr[k] * mean_gh);
                        }
                    }
                });
            }
            Op::FeatureWeightedSum(p, x) => {
                let (pv, xv) = (self.value(*p), self.value(*x));
                let (lead, d, n) = fws_dims(pv.shape(), xv.shape())?;
                let shared = xv.rank() == 2 && pv.rank() != 2;
                self.accumulate(grads, *p, |gp| {
                    for b in 0..lead {
                        let xb = if shared { 0 } else { b * n * d };
                        for k in 0..d {
                            let gv = gd[b * d + k];
                            let row = &mut gp[(b * d + k) * n..(b * d + k + 1) * n];
                            for (i, o) in row.iter_mut().enumerate() {
                                *o += gv * xv.data()[xb + i * d + k];
                            }
                        }
                    }
                });
                self.accumulate(grads, *x, |gx| {
                    for b in 0..lead {
                        let xb = if shared { 0 } else { b * n * d };
                        for k in 0..d {
                            let gv = gd[b * d + k];
                            let prow = &pv.data()[(b * d + k) * n..(b * d + k + 1) * n];
                            for (i, &pw) in prow.iter().enumerate() {
                                gx[xb + i * d + k] += gv * pw;
                            }
                        }
                    }
                });
            }
        }
        Ok(())
    }

    fn elementwise(
        &self,
        grads: &mut [Option<Tensor>],
        x: Var,
        gd: &[f64],
        yd: &[f64],
        deriv: impl Fn(f64, f64) -> f64,
    ) {
        let xd = self.value(x).data();
        self.accumulate(grads, x, |gx| {
            for (i, o) in gx.iter_mut().enumerate() {
                *o += gd[i] * deriv(xd[i], yd[i]);
            }
        });
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, s) in dst.iter_mut().zip(src) {
        *o += s;
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn fws_dims(p: &[usize], x: &[usize]) -> Result<(usize, usize, usize)> {
    if p.len() < 2 || x.len() < 2 {
        return Err(Error::shape("feature_weighted_sum", p, x));
    }
    let (d, n) = (p[p.len() - 2], p[p.len() - 1]);
    let lead_p = &p[..p.len() - 2];
    let ok_tail = x[x.len() - 2] == n && x[x.len() - 1] == d;
    let ok_lead = x.len() == 2 || x[..x.len() - 2] == *lead_p;
    if !ok_tail || !ok_lead {
        return Err(Error::shape("feature_weighted_sum", p, x));
    }
    Ok((lead_p.iter().product(), d, n))
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
