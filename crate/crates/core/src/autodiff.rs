//! Tape-based reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Graph`] records every op as it is applied, so node indices are already
//! a topological order and [`Graph::backward`] simply walks them in reverse.
//! Parameters enter through [`Graph::param`], which reads from a borrowed
//! [`ParamStore`] and maps each parameter to a single leaf no matter how many
//! times it is used.

use std::collections::HashMap;

use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, AttnMask};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Gelu(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Abs(Var),
    Huber(Var, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        offset: Var,
        xhat: Vec<f64>,
        inv: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        // column-major normalized values and per-column reciprocal std;
        // absent when running statistics were used
        batch: Option<(Vec<f64>, Vec<f64>)>,
        xhat: Vec<f64>,
        inv: Vec<f64>,
    },
    Rope {
        x: Var,
        head_dim: usize,
        positions: Vec<usize>,
        base: f64,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        weights: Vec<f64>,
    },
    SliceRows(Var, usize),
    ConcatRows(Vec<Var>),
    Reshape(Var),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    RowDiff(Var),
    Unfold {
        x: Var,
        kernel: usize,
        dilation: usize,
        pad: usize,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        class: usize,
        probs: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients from one backward pass.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to any node that influences it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for each parameter leaf that received one.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.params
            .iter()
            .filter_map(|&(id, n)| self.nodes[n].as_ref().map(|g| (id, g)))
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|&(_, n)| self.nodes[n].as_ref())
    }
}

pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
    backward_done: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    /// A graph without parameters; every leaf is a constant or a variable
    /// created with [`Graph::variable`].
    pub fn new() -> Self {
        Self {
            store: None,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
            backward_done: false,
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Self {
            store: Some(store),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf that receives a gradient but is not backed by a parameter.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let store = self.store.expect("Graph::param requires a graph built with_params");
        let v = self.push(store.value(id).clone(), Op::Leaf, true);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `x + b` with `b` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.len() != xv.cols() {
            return shape_err(format!(
                "bias {} does not match input {}",
                bv.shape_str(),
                xv.shape_str()
            ));
        }
        let mut out = xv.as_matrix();
        let c = out.cols();
        for (i, o) in out.data_mut().iter_mut().enumerate() {
            *o += bv.data()[i % c];
        }
        let ng = self.ng(x) || self.ng(b);
        Ok(self.push(out, Op::AddBias(x, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        let ng = self.ng(x);
        self.push(out, Op::Affine(x, scale), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.affine(x, s, 0.0)
    }

    fn unary(&mut self, x: Var, f: fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(x).map(f);
        let ng = self.ng(x);
        self.push(out, op, ng)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, kernels::gelu, Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn huber(&mut self, x: Var, delta: f64) -> Var {
        let out = self.value(x).map(|r| kernels::huber(r, delta));
        let ng = self.ng(x);
        self.push(out, Op::Huber(x, delta), ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, offset: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        if self.value(gain).len() != cols || self.value(offset).len() != cols {
            return shape_err(format!(
                "layer norm gain/offset {} / {} for input {}",
                self.value(gain).shape_str(),
                self.value(offset).shape_str(),
                xv.shape_str()
            ));
        }
        let (xhat, inv) = kernels::normalize_rows(xv.data(), rows, cols, eps);
        let (g, b) = (self.value(gain).data(), self.value(offset).data());
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(i, h)| g[i % cols] * h + b[i % cols])
            .collect();
        let out = Tensor::matrix(rows, cols, out)?;
        let ng = self.ng(x) || self.ng(gain) || self.ng(offset);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                offset,
                xhat,
                inv,
            },
            ng,
        ))
    }

    /// Per-column normalization. With `running = None` the statistics come
    /// from the batch (training); the batch mean and population variance are
    /// returned for running-average bookkeeping.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        if self.value(gamma).len() != cols || self.value(beta).len() != cols {
            return shape_err(format!("batch norm affine params for input {}", xv.shape_str()));
        }
        let xt = xv.transpose();
        let (mean, var): (Vec<f64>, Vec<f64>) = (0..cols)
            .map(|c| {
                let col = xt.row(c);
                let m = col.iter().sum::<f64>() / rows as f64;
                let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / rows as f64;
                (m, v)
            })
            .unzip();
        let (xhat_t, inv, batch) = match running {
            None => {
                let (h, inv) = kernels::normalize_rows(xt.data(), cols, rows, eps);
                (h.clone(), inv.clone(), Some((h, inv)))
            }
            Some((rm, rv)) => {
                let inv: Vec<f64> = rv.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                let mut h = xt.data().to_vec();
                for c in 0..cols {
                    for v in &mut h[c * rows..(c + 1) * rows] {
                        *v = (*v - rm[c]) * inv[c];
                    }
                }
                (h, inv, None)
            }
        };
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![0.0; rows * cols];
        for c in 0..cols {
            for r in 0..rows {
                out[r * cols + c] = g[c] * xhat_t[c * rows + r] + b[c];
            }
        }
        let out = Tensor::matrix(rows, cols, out)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        let v = self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                batch,
                xhat: xhat_t,
                inv,
            },
            ng,
        );
        Ok((v, mean, var))
    }

    /// Rotary position embedding of each `head_dim` group of every row.
    pub fn rope(&mut self, x: Var, head_dim: usize, positions: &[usize], base: f64) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        if !head_dim.is_multiple_of(2) || head_dim == 0 || cols % head_dim != 0 {
            return Err(Error::Config(format!(
                "rope head dim {head_dim} must be even and divide width {cols}"
            )));
        }
        if positions.len() != rows {
            return shape_err(format!("{} positions for {rows} rows", positions.len()));
        }
        let mut out = xv.as_matrix();
        kernels::rope_apply(out.data_mut(), rows, cols, head_dim, positions, base, 1.0);
        let ng = self.ng(x);
        Ok(self.push(
            out,
            Op::Rope {
                x,
                head_dim,
                positions: positions.to_vec(),
                base,
            },
            ng,
        ))
    }

    /// Multi-head scaled dot-product attention on already projected inputs.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, mask: &AttnMask) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (nq, d) = (qv.rows(), qv.cols());
        let nk = kv.rows();
        if kv.cols() != d || vv.cols() != d || vv.rows() != nk {
            return shape_err(format!(
                "attention q {} k {} v {}",
                qv.shape_str(),
                kv.shape_str(),
                vv.shape_str()
            ));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::Config(format!("width {d} not divisible by {heads} heads")));
        }
        if let AttnMask::Explicit(m) = mask {
            if m.len() != nq * nk {
                return shape_err(format!("mask of {} entries for {nq}×{nk} scores", m.len()));
            }
        }
        let (out, weights) = kernels::attention_forward(qv.data(), kv.data(), vv.data(), nq, nk, d, heads, mask);
        let out = Tensor::matrix(nq, d, out)?;
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                weights,
            },
            ng,
        ))
    }

    /// Attention weights (`heads × nq × nk`) stored by an attention node.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { weights, .. } => Some(weights),
            _ => None,
        }
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_rows(start, len)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceRows(x, start), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat of zero parts");
        }
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&tensors)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn reshape(&mut self, x: Var, dims: Vec<usize>) -> Result<Var> {
        let out = self.value(x).clone().reshape(dims)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Reshape(x), ng))
    }

    /// Column means as a `1 × cols` row.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let cols = xv.cols();
        let out = Tensor::matrix(1, cols, xv.column_means()).expect("width matches");
        let ng = self.ng(x);
        self.push(out, Op::MeanRows(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let ng = self.ng(x);
        self.push(out, Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).mean());
        let ng = self.ng(x);
        self.push(out, Op::Mean(x), ng)
    }

    /// First difference along rows: `y[i] = x[i+1] − x[i]`.
    pub fn row_diff(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        if rows < 2 {
            return shape_err(format!("row difference needs 2 rows, got {}", xv.shape_str()));
        }
        let d = xv.data();
        let out: Vec<f64> = (0..(rows - 1) * cols).map(|i| d[i + cols] - d[i]).collect();
        let out = Tensor::matrix(rows - 1, cols, out)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::RowDiff(x), ng))
    }

    /// Im2col for a 1-D convolution over rows.
    pub fn unfold(&mut self, x: Var, kernel: usize, dilation: usize, pad: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        let span = dilation * (kernel.max(1) - 1);
        if kernel == 0 || rows + 2 * pad <= span {
            return shape_err(format!(
                "sequence of {rows} rows shorter than receptive field {}",
                span + 1
            ));
        }
        let (out, out_rows) = kernels::unfold_forward(xv.data(), rows, cols, kernel, dilation, pad);
        let out = Tensor::matrix(out_rows, kernel * cols, out)?;
        let ng = self.ng(x);
        Ok(self.push(
            out,
            Op::Unfold {
                x,
                kernel,
                dilation,
                pad,
            },
            ng,
        ))
    }

    /// Mean-free cross entropy of a single row of logits against `class`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, class: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != 1 || class >= lv.cols() {
            return shape_err(format!("cross entropy over {} with class {class}", lv.shape_str()));
        }
        let max = lv.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lv.data().iter().map(|x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let loss = -(lv.data()[class] - max - total.ln());
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy { logits, class, probs },
            ng,
        ))
    }

    /// Allows another [`Graph::backward`] call on this graph.
    pub fn reset_backward(&mut self) {
        self.backward_done = false;
    }

    /// Propagates `d loss / d node` for every node that needs a gradient.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Accumulation);
        }
        if self.value(loss).len() != 1 {
            return shape_err(format!("backward from non-scalar {}", self.value(loss).shape_str()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).dims(), 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let params = self.param_nodes.iter().map(|(&id, v)| (id, v.0)).collect();
        Ok(Gradients { nodes: grads, params })
    }

    /// Runs `f` on the gradient buffer of `v`, allocating it on first use.
    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let t = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.nodes[v.0].value.dims()));
        f(t.data_mut());
    }

    /// `dx[j] += g[j] · f(j)`.
    fn acc_scaled(&self, grads: &mut [Option<Tensor>], x: Var, gd: &[f64], f: impl Fn(usize) -> f64) {
        self.acc(grads, x, |t| {
            for (j, o) in t.iter_mut().enumerate() {
                *o += gd[j] * f(j);
            }
        });
    }

    fn acc_add(&self, grads: &mut [Option<Tensor>], x: Var, src: &[f64]) {
        self.acc(grads, x, |t| {
            for (o, v) in t.iter_mut().zip(src) {
                *o += v;
            }
        });
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        let val = |v: &Var| &self.nodes[v.0].value;

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(a), val(b));
                let (n, k, m) = (av.rows(), av.cols(), bv.cols());
                self.acc(grads, *a, |t| {
                    kernels::matmul_grads(av.data(), bv.data(), gd, n, k, m, Some(t), None)
                });
                self.acc(grads, *b, |t| {
                    kernels::matmul_grads(av.data(), bv.data(), gd, n, k, m, None, Some(t))
                });
            }
            Op::AddBias(x, b) => {
                self.acc_add(grads, *x, gd);
                self.acc(grads, *b, |t| {
                    let c = t.len();
                    for (j, v) in gd.iter().enumerate() {
                        t[j % c] += v;
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc_add(grads, *a, gd);
                self.acc_add(grads, *b, gd);
            }
            Op::Sub(a, b) => {
                self.acc_add(grads, *a, gd);
                self.acc_scaled(grads, *b, gd, |_| -1.0);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a).data(), val(b).data());
                self.acc_scaled(grads, *a, gd, |j| bv[j]);
                self.acc_scaled(grads, *b, gd, |j| av[j]);
            }
            Op::Affine(x, s) => self.acc_scaled(grads, *x, gd, |_| *s),
            Op::Gelu(x) => {
                let xv = val(x).data();
                self.acc_scaled(grads, *x, gd, |j| kernels::gelu_grad(xv[j]));
            }
            Op::Relu(x) => {
                let xv = val(x).data();
                self.acc_scaled(grads, *x, gd, |j| if xv[j] > 0.0 { 1.0 } else { 0.0 });
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                self.acc_scaled(grads, *x, gd, |j| 1.0 - y[j] * y[j]);
            }
            Op::Sigmoid(x) => {
                let y = node.value.data();
                self.acc_scaled(grads, *x, gd, |j| y[j] * (1.0 - y[j]));
            }
            Op::Abs(x) => {
                let xv = val(x).data();
                self.acc_scaled(grads, *x, gd, |j| if xv[j] == 0.0 { 0.0 } else { xv[j].signum() });
            }
            Op::Huber(x, delta) => {
                let xv = val(x).data();
                self.acc_scaled(grads, *x, gd, |j| kernels::huber_grad(xv[j], *delta));
            }
            Op::LayerNorm {
                x,
                gain,
                offset,
                xhat,
                inv,
            } => {
                let (rows, cols) = (g.rows(), g.cols());
                let gain_v = val(gain).data();
                self.acc(grads, *gain, |t| {
                    for (j, v) in gd.iter().enumerate() {
                        t[j % cols] += v * xhat[j];
                    }
                });
                self.acc(grads, *offset, |t| {
                    for (j, v) in gd.iter().enumerate() {
                        t[j % cols] += v;
                    }
                });
                self.acc(grads, *x, |t| {
                    let dxhat: Vec<f64> = gd.iter().enumerate().map(|(j, v)| v * gain_v[j % cols]).collect();
                    kernels::normalize_rows_backward(&dxhat, xhat, inv, rows, cols, t);
                });
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                batch,
                xhat,
                inv,
            } => {
                let (rows, cols) = (g.rows(), g.cols());
                let gam = val(gamma).data();
                self.acc(grads, *gamma, |t| {
                    for c in 0..cols {
                        for r in 0..rows {
                            t[c] += gd[r * cols + c] * xhat[c * rows + r];
                        }
                    }
                });
                self.acc(grads, *beta, |t| {
                    for (j, v) in gd.iter().enumerate() {
                        t[j % cols] += v;
                    }
                });
                self.acc(grads, *x, |t| {
                    let mut dxhat_t = vec![0.0; rows * cols];
                    for c in 0..cols {
                        for r in 0..rows {
                            dxhat_t[c * rows + r] = gd[r * cols + c] * gam[c];
                        }
                    }
                    let mut dx_t = vec![0.0; rows * cols];
                    match batch {
                        Some((h, is)) => kernels::normalize_rows_backward(&dxhat_t, h, is, cols, rows, &mut dx_t),
                        None => {
                            for c in 0..cols {
                                for r in 0..rows {
                                    dx_t[c * rows + r] = dxhat_t[c * rows + r] * inv[c];
                                }
                            }
                        }
                    }
                    for c in 0..cols {
                        for r in 0..rows {
                            t[r * cols + c] += dx_t[c * rows + r];
                        }
                    }
                });
            }
            Op::Rope {
                x,
                head_dim,
                positions,
                base,
            } => {
                let mut back = gd.to_vec();
                kernels::rope_apply(&mut back, g.rows(), g.cols(), *head_dim, positions, *base, -1.0);
                self.acc_add(grads, *x, &back);
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                weights,
            } => {
                let (qv, kv, vv) = (val(q), val(k), val(v));
                let (nq, d, nk) = (qv.rows(), qv.cols(), kv.rows());
                let mut dq = vec![0.0; nq * d];
                let mut dk = vec![0.0; nk * d];
                let mut dv = vec![0.0; nk * d];
                kernels::attention_backward(
                    qv.data(),
                    kv.data(),
                    vv.data(),
                    weights,
                    gd,
                    nq,
                    nk,
                    d,
                    *heads,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                self.acc_add(grads, *q, &dq);
                self.acc_add(grads, *k, &dk);
                self.acc_add(grads, *v, &dv);
            }
            Op::SliceRows(x, start) => {
                let off = start * g.cols();
                self.acc(grads, *x, |t| {
                    for (o, v) in t[off..].iter_mut().zip(gd) {
                        *o += v;
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = val(p).len();
                    self.acc_add(grads, *p, &gd[off..off + n]);
                    off += n;
                }
            }
            Op::Reshape(x) => self.acc_add(grads, *x, gd),
            Op::MeanRows(x) => {
                let rows = val(x).rows() as f64;
                let c = g.len();
                self.acc(grads, *x, |t| {
                    for (j, o) in t.iter_mut().enumerate() {
                        *o += gd[j % c] / rows;
                    }
                });
            }
            Op::Sum(x) => self.acc(grads, *x, |t| t.iter_mut().for_each(|o| *o += gd[0])),
            Op::Mean(x) => {
                let n = val(x).len() as f64;
                self.acc(grads, *x, |t| t.iter_mut().for_each(|o| *o += gd[0] / n));
            }
            Op::RowDiff(x) => {
                let c = g.cols();
                self.acc(grads, *x, |t| {
                    for (j, v) in gd.iter().enumerate() {
                        t[j + c] += v;
                        t[j] -= v;
                    }
                });
            }
            Op::Unfold {
                x,
                kernel,
                dilation,
                pad,
            } => {
                let xv = val(x);
                self.acc(grads, *x, |t| {
                    kernels::unfold_backward(gd, xv.rows(), xv.cols(), *kernel, *dilation, *pad, g.rows(), t)
                });
            }
            Op::SoftmaxCrossEntropy { logits, class, probs } => {
                self.acc(grads, *logits, |t| {
                    for (j, (o, p)) in t.iter_mut().zip(probs).enumerate() {
                        *o += gd[0] * (p - if j == *class { 1.0 } else { 0.0 });
                    }
                });
            }
        }
    }
}
