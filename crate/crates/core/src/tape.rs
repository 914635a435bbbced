//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] records primitive ops in execution order, so node indices are
//! already a topological order of the computation graph. One reverse sweep
//! over the nodes visits each op exactly once; forward values are never
//! re-executed. Values are owned by the tape and addressed by [`ValueId`].

use crate::error::{GlomError, Result};
use crate::tensor::{dot, matvec_into, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(usize);

impl ValueId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(ValueId, ValueId),
    Sub(ValueId, ValueId),
    Mul(ValueId, ValueId),
    Scale(ValueId, f64),
    /// sum_i coeffs[i] * items[i] + bias, all items same shape.
    Affine { items: Vec<ValueId>, coeffs: Vec<f64>, bias: f64 },
    /// W x for W: [rows, cols], x: [cols].
    MatVec { w: ValueId, x: ValueId },
    Relu(ValueId),
    Sin(ValueId),
    Sigmoid(ValueId),
    Dot(ValueId, ValueId),
    Sum(ValueId),
    /// Scalars stacked into a vector.
    Stack(Vec<ValueId>),
    /// softmax(beta * x), computed with max subtraction.
    SoftmaxScaled { x: ValueId, beta: f64 },
    /// sum_i weights[i] * items[i]; weights is a tape vector, items same shape.
    WeightedSum { weights: ValueId, items: Vec<ValueId> },
    /// x / rms(x); identity when rms(x) is (near) zero.
    RmsNorm(ValueId),
    /// Value copy whose backward contributes nothing to the input.
    Detach(ValueId),
    Concat(Vec<ValueId>),
    LogSumExp(ValueId),
    /// Cosine similarity against a fixed target; 0 when either side is zero.
    CosSimConst { x: ValueId, target: Tensor },
    /// sum_i weights[i] * (x[i] - target[i])^2 with fixed target and weights.
    WeightedSse { x: ValueId, target: Tensor, weights: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: ValueId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Gradient of a leaf, or zeros of its primal shape if none flowed.
    pub fn get_or_zeros(&self, id: ValueId, tape: &Tape) -> Tensor {
        match self.grads[id.0].as_ref() {
            Some(t) => t.clone(),
            None => Tensor::zeros(tape.value(id).shape().to_vec()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: ValueId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> ValueId {
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { value, op, requires_grad });
        id
    }

    fn rg(&self, id: ValueId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// A leaf that participates in gradient computation (parameter or input).
    pub fn leaf(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf treated as data: no gradient is tracked through it.
    pub fn constant(&mut self, value: Tensor) -> ValueId {
        self.push(value, Op::Leaf, false)
    }

    fn check_same_shape(&self, a: ValueId, b: ValueId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(GlomError::config(format!(
                "{what}: shape {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape(a, b, "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape(a, b, "sub")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x - y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: ValueId, c: f64) -> ValueId {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).unwrap();
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, c), rg)
    }

    pub fn affine(&mut self, items: &[ValueId], coeffs: &[f64], bias: f64) -> Result<ValueId> {
        if items.is_empty() || items.len() != coeffs.len() {
            return Err(GlomError::usage("affine: items/coeffs length mismatch or empty"));
        }
        for &it in &items[1..] {
            self.check_same_shape(items[0], it, "affine")?;
        }
        let n = self.value(items[0]).len();
        let mut data = vec![bias; n];
        for (&it, &c) in items.iter().zip(coeffs) {
            for (d, v) in data.iter_mut().zip(self.value(it).data()) {
                *d += c * v;
            }
        }
        let t = Tensor::new(self.value(items[0]).shape().to_vec(), data)?;
        let rg = items.iter().any(|&i| self.rg(i));
        Ok(self.push(t, Op::Affine { items: items.to_vec(), coeffs: coeffs.to_vec(), bias }, rg))
    }

    pub fn matvec(&mut self, w: ValueId, x: ValueId) -> Result<ValueId> {
        let (ws, xs) = (self.value(w).shape().to_vec(), self.value(x).shape().to_vec());
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(GlomError::config(format!(
                "matvec: W {ws:?} incompatible with x {xs:?}"
            )));
        }
        let (rows, cols) = (ws[0], ws[1]);
        let mut y = vec![0.0; rows];
        matvec_into(&mut y, self.value(w).data(), self.value(x).data(), rows, cols);
        let rg = self.rg(w) || self.rg(x);
        Ok(self.push(Tensor::vector(y), Op::MatVec { w, x }, rg))
    }

    pub fn relu(&mut self, a: ValueId) -> ValueId {
        let data = self.value(a).data().iter().map(|&x| x.max(0.0)).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).unwrap();
        let rg = self.rg(a);
        self.push(t, Op::Relu(a), rg)
    }

    pub fn sin(&mut self, a: ValueId) -> ValueId {
        let data = self.value(a).data().iter().map(|x| x.sin()).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).unwrap();
        let rg = self.rg(a);
        self.push(t, Op::Sin(a), rg)
    }

    pub fn sigmoid(&mut self, a: ValueId) -> ValueId {
        let data = self.value(a).data().iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data).unwrap();
        let rg = self.rg(a);
        self.push(t, Op::Sigmoid(a), rg)
    }

    pub fn dot_product(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        self.check_same_shape(a, b, "dot")?;
        let v = dot(self.value(a).data(), self.value(b).data());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::scalar(v), Op::Dot(a, b), rg))
    }

    pub fn sum(&mut self, a: ValueId) -> ValueId {
        let v = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(v), Op::Sum(a), rg)
    }

    pub fn stack(&mut self, items: &[ValueId]) -> Result<ValueId> {
        let mut data = Vec::with_capacity(items.len());
        for &it in items {
            if !self.value(it).is_scalar() {
                return Err(GlomError::usage("stack: all inputs must be scalars"));
            }
            data.push(self.value(it).item());
        }
        let rg = items.iter().any(|&i| self.rg(i));
        Ok(self.push(Tensor::vector(data), Op::Stack(items.to_vec()), rg))
    }

    pub fn softmax_scaled(&mut self, x: ValueId, beta: f64) -> Result<ValueId> {
        if self.value(x).shape().len() != 1 || self.value(x).is_empty() {
            return Err(GlomError::usage("softmax: expects a nonempty vector"));
        }
        let probs = softmax_scaled_values(self.value(x).data(), beta);
        let rg = self.rg(x);
        Ok(self.push(Tensor::vector(probs), Op::SoftmaxScaled { x, beta }, rg))
    }

    pub fn weighted_sum(&mut self, weights: ValueId, items: &[ValueId]) -> Result<ValueId> {
        if self.value(weights).len() != items.len() || items.is_empty() {
            return Err(GlomError::usage("weighted_sum: weights/items length mismatch"));
        }
        for &it in &items[1..] {
            self.check_same_shape(items[0], it, "weighted_sum")?;
        }
        let n = self.value(items[0]).len();
        let mut data = vec![0.0; n];
        for (i, &it) in items.iter().enumerate() {
            let w = self.value(weights).data()[i];
            for (d, v) in data.iter_mut().zip(self.value(it).data()) {
                *d += w * v;
            }
        }
        let t = Tensor::new(self.value(items[0]).shape().to_vec(), data)?;
        let rg = self.rg(weights) || items.iter().any(|&i| self.rg(i));
        Ok(self.push(t, Op::WeightedSum { weights, items: items.to_vec() }, rg))
    }

    pub fn rms_norm(&mut self, a: ValueId) -> ValueId {
        let t = rms_norm_values(self.value(a));
        let rg = self.rg(a);
        self.push(t, Op::RmsNorm(a), rg)
    }

    /// Same value, but gradients do not flow back through it.
    pub fn detach(&mut self, a: ValueId) -> ValueId {
        let t = self.value(a).clone();
        self.push(t, Op::Detach(a), false)
    }

    pub fn concat(&mut self, items: &[ValueId]) -> Result<ValueId> {
        if items.is_empty() {
            return Err(GlomError::usage("concat: no inputs"));
        }
        let mut data = Vec::new();
        for &it in items {
            data.extend_from_slice(self.value(it).data());
        }
        let rg = items.iter().any(|&i| self.rg(i));
        Ok(self.push(Tensor::vector(data), Op::Concat(items.to_vec()), rg))
    }

    pub fn log_sum_exp(&mut self, a: ValueId) -> Result<ValueId> {
        if self.value(a).is_empty() {
            return Err(GlomError::usage("log_sum_exp: empty input"));
        }
        let xs = self.value(a).data();
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let rg = self.rg(a);
        Ok(self.push(Tensor::scalar(v), Op::LogSumExp(a), rg))
    }

    /// Cosine similarity of `x` against a fixed target vector.
    /// A zero vector on either side yields similarity 0 (degenerate case).
    pub fn cos_sim_const(&mut self, x: ValueId, target: Tensor) -> Result<ValueId> {
        if self.value(x).shape() != target.shape() {
            return Err(GlomError::config("cos_sim_const: shape mismatch"));
        }
        let v = cosine_or_zero(self.value(x).data(), target.data());
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(v), Op::CosSimConst { x, target }, rg))
    }

    pub fn weighted_sse(&mut self, x: ValueId, target: Tensor, weights: Vec<f64>) -> Result<ValueId> {
        if self.value(x).shape() != target.shape() || weights.len() != target.len() {
            return Err(GlomError::config("weighted_sse: shape mismatch"));
        }
        let v = self
            .value(x)
            .data()
            .iter()
            .zip(target.data())
            .zip(&weights)
            .map(|((a, t), w)| w * (a - t) * (a - t))
            .sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(v), Op::WeightedSse { x, target, weights }, rg))
    }

    /// Reverse sweep from `root`. The root must be a scalar unless an explicit
    /// `seed` of the root's shape is supplied.
    pub fn backward_seeded(&self, root: ValueId, seed: Option<Tensor>) -> Result<Gradients> {
        let seed = match seed {
            Some(s) => {
                if s.shape() != self.value(root).shape() {
                    return Err(GlomError::usage("backward: seed shape mismatch"));
                }
                s
            }
            None => {
                if !self.value(root).is_scalar() {
                    return Err(GlomError::usage(
                        "backward: non-scalar root requires an explicit seed",
                    ));
                }
                Tensor::scalar(1.0)
            }
        };
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(seed);

        for i in (0..=root.0).rev() {
            if grads[i].is_none() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = grads[i].take().unwrap();
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    pub fn backward(&self, root: ValueId) -> Result<Gradients> {
        self.backward_seeded(root, None)
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut Vec<Option<Tensor>>) {
        let acc = |grads: &mut Vec<Option<Tensor>>, id: ValueId, contrib: &[f64], tape: &Tape| {
            if !tape.rg(id) {
                return;
            }
            let slot = &mut grads[id.0];
            match slot {
                Some(t) => {
                    for (d, c) in t.data_mut().iter_mut().zip(contrib) {
                        *d += c;
                    }
                }
                None => {
                    let shape = tape.value(id).shape().to_vec();
                    *slot = Some(Tensor::new(shape, contrib.to_vec()).unwrap());
                }
            }
        };

        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(grads, *a, g.data(), self);
                acc(grads, *b, g.data(), self);
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.data(), self);
                let neg: Vec<f64> = g.data().iter().map(|v| -v).collect();
                acc(grads, *b, &neg, self);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> =
                    g.data().iter().zip(self.value(*b).data()).map(|(g, y)| g * y).collect();
                let db: Vec<f64> =
                    g.data().iter().zip(self.value(*a).data()).map(|(g, x)| g * x).collect();
                acc(grads, *a, &da, self);
                acc(grads, *b, &db, self);
            }
            Op::Scale(a, c) => {
                let da: Vec<f64> = g.data().iter().map(|v| v * c).collect();
                acc(grads, *a, &da, self);
            }
            Op::Affine { items, coeffs, .. } => {
                for (&it, &c) in items.iter().zip(coeffs) {
                    if !self.rg(it) {
                        continue;
                    }
                    let da: Vec<f64> = g.data().iter().map(|v| v * c).collect();
                    acc(grads, it, &da, self);
                }
            }
            Op::MatVec { w, x } => {
                let ws = self.value(*w).shape();
                let (rows, cols) = (ws[0], ws[1]);
                if self.rg(*w) {
                    let xv = self.value(*x).data();
                    let mut dw = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let gr = g.data()[r];
                        for c in 0..cols {
                            dw[r * cols + c] = gr * xv[c];
                        }
                    }
                    acc(grads, *w, &dw, self);
                }
                if self.rg(*x) {
                    let wv = self.value(*w).data();
                    let mut dx = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g.data()[r];
                        for c in 0..cols {
                            dx[c] += gr * wv[r * cols + c];
                        }
                    }
                    acc(grads, *x, &dx, self);
                }
            }
            Op::Relu(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                acc(grads, *a, &da, self);
            }
            Op::Sin(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, x)| g * x.cos())
                    .collect();
                acc(grads, *a, &da, self);
            }
            Op::Sigmoid(a) => {
                let da: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(self.nodes[i].value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                acc(grads, *a, &da, self);
            }
            Op::Dot(a, b) => {
                let gs = g.item();
                if self.rg(*a) {
                    let da: Vec<f64> = self.value(*b).data().iter().map(|v| gs * v).collect();
                    acc(grads, *a, &da, self);
                }
                if self.rg(*b) {
                    let db: Vec<f64> = self.value(*a).data().iter().map(|v| gs * v).collect();
                    acc(grads, *b, &db, self);
                }
            }
            Op::Sum(a) => {
                let gs = g.item();
                let da = vec![gs; self.value(*a).len()];
                acc(grads, *a, &da, self);
            }
            Op::Stack(items) => {
                for (k, &it) in items.iter().enumerate() {
                    acc(grads, it, &[g.data()[k]], self);
                }
            }
            Op::SoftmaxScaled { x, beta } => {
                let y = self.nodes[i].value.data();
                let inner: f64 = y.iter().zip(g.data()).map(|(p, g)| p * g).sum();
                let dx: Vec<f64> = y
                    .iter()
                    .zip(g.data())
                    .map(|(p, g)| beta * p * (g - inner))
                    .collect();
                acc(grads, *x, &dx, self);
            }
            Op::WeightedSum { weights, items } => {
                if self.rg(*weights) {
                    let mut dw = vec![0.0; items.len()];
                    for (k, &it) in items.iter().enumerate() {
                        dw[k] = dot(g.data(), self.value(it).data());
                    }
                    acc(grads, *weights, &dw, self);
                }
                for (k, &it) in items.iter().enumerate() {
                    if !self.rg(it) {
                        continue;
                    }
                    let w = self.value(*weights).data()[k];
                    let da: Vec<f64> = g.data().iter().map(|v| v * w).collect();
                    acc(grads, it, &da, self);
                }
            }
            Op::RmsNorm(a) => {
                let x = self.value(*a).data();
                let n = x.len() as f64;
                let r = self.value(*a).rms();
                if r <= RMS_NORM_FLOOR {
                    // Identity branch.
                    acc(grads, *a, g.data(), self);
                } else {
                    let xg = dot(x, g.data());
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(x)
                        .map(|(g, xi)| g / r - xi * xg / (n * r * r * r))
                        .collect();
                    acc(grads, *a, &da, self);
                }
            }
            Op::Detach(_) => {}
            Op::Concat(items) => {
                let mut off = 0;
                for &it in items {
                    let len = self.value(it).len();
                    acc(grads, it, &g.data()[off..off + len], self);
                    off += len;
                }
            }
            Op::LogSumExp(a) => {
                let gs = g.item();
                let xs = self.value(*a).data();
                let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = xs.iter().map(|x| (x - m).exp()).sum();
                let da: Vec<f64> = xs.iter().map(|x| gs * (x - m).exp() / denom).collect();
                acc(grads, *a, &da, self);
            }
            Op::CosSimConst { x, target } => {
                let gs = g.item();
                let xv = self.value(*x).data();
                let nx = dot(xv, xv).sqrt();
                let nt = dot(target.data(), target.data()).sqrt();
                if nx == 0.0 || nt == 0.0 {
                    return;
                }
                let c = dot(xv, target.data()) / (nx * nt);
                let da: Vec<f64> = xv
                    .iter()
                    .zip(target.data())
                    .map(|(xi, ti)| gs * (ti / (nx * nt) - c * xi / (nx * nx)))
                    .collect();
                acc(grads, *x, &da, self);
            }
            Op::WeightedSse { x, target, weights } => {
                let gs = g.item();
                let da: Vec<f64> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(target.data())
                    .zip(weights)
                    .map(|((a, t), w)| gs * 2.0 * w * (a - t))
                    .collect();
                acc(grads, *x, &da, self);
            }
        }
    }
}

/// Below this RMS a vector is treated as degenerate and normalization is the
/// identity, so zero vectors stay zero.
pub const RMS_NORM_FLOOR: f64 = 1e-12;

/// Vectors already within this distance of unit RMS pass through untouched,
/// making normalization idempotent at the bit level: re-normalizing its own
/// output (rms = 1 up to a few ulps) must be the exact identity so that
/// prev-only schedules give bit-identical trajectories. The backward pass
/// keeps the true quotient-rule formula; the resulting O(1e-12) forward/
/// backward mismatch is far below finite-difference tolerance.
pub const RMS_SNAP: f64 = 1e-12;

pub fn rms_norm_values(t: &Tensor) -> Tensor {
    let r = t.rms();
    if r <= RMS_NORM_FLOOR || (r - 1.0).abs() <= RMS_SNAP {
        return t.clone();
    }
    let data = t.data().iter().map(|v| v / r).collect();
    Tensor::new(t.shape().to_vec(), data).unwrap()
}

/// softmax(beta * x) with max subtraction.
pub fn softmax_scaled_values(xs: &[f64], beta: f64) -> Vec<f64> {
    let m = xs.iter().map(|x| beta * x).fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = xs.iter().map(|x| (beta * x - m).exp()).collect();
    let z: f64 = out.iter().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

/// Cosine similarity, defined as 0 when either vector is zero.
pub fn cosine_or_zero(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        // f(x) = x^2 at x = 3 -> df/dx = 6
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.mul(x, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn product_rule() {
        // f(x, y) = x * y at (2, 5) -> grads (5, 2)
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let y = tape.leaf(Tensor::scalar(5.0));
        let z = tape.mul(x, y).unwrap();
        let grads = tape.backward(z).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 5.0);
        assert_eq!(grads.get(y).unwrap().item(), 2.0);
    }

    #[test]
    fn reuse_accumulates_additively() {
        // f(x) = x*x + x -> df/dx = 2x + 1
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(4.0));
        let sq = tape.mul(x, x).unwrap();
        let y = tape.add(sq, x).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 9.0);
    }

    #[test]
    fn non_scalar_root_needs_seed() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.scale(x, 2.0);
        assert!(tape.backward(y).is_err());
        let seed = Tensor::vector(vec![1.0, 0.0]);
        let grads = tape.backward_seeded(y, Some(seed)).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 0.0]);
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let d = tape.detach(x);
        let y = tape.mul(d, d).unwrap();
        assert_eq!(tape.value(y).item(), 9.0);
        let grads = tape.backward(y).unwrap();
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn rms_norm_unit_vector_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, -1.0, 1.0, -1.0]));
        let y = tape.rms_norm(x);
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn rms_norm_zero_stays_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.rms_norm(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_shift_invariance() {
        let xs = [0.3, -1.2, 2.0, 0.0];
        let shifted: Vec<f64> = xs.iter().map(|x| x + 17.5).collect();
        let a = softmax_scaled_values(&xs, 1.7);
        let b = softmax_scaled_values(&shifted, 1.7);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matvec_matches_manual() {
        let mut tape = Tape::new();
        let w = tape.leaf(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let x = tape.leaf(Tensor::vector(vec![1.0, 0.0, -1.0]));
        let y = tape.matvec(w, x).unwrap();
        assert_eq!(tape.value(y).data(), &[-2.0, -2.0]);
    }
}
