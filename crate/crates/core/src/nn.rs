//! Layers built on the autodiff graph, plus eager versions of the core ops.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::kernels::{self, AttnMask};
use crate::params::{xavier, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const ROPE_BASE: f64 = 10_000.0;
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionConfig {
    pub model_dim: usize,
    pub heads: usize,
    pub causal: bool,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "model dim {} not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::Config(format!(
                "per-head dim {} must be even for rotary embeddings",
                self.head_dim()
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }
}

/// `input · weight + bias`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.cols() != weight.rows() || weight.rank() != 2 || bias.len() != weight.cols() {
        return shape_err(format!(
            "linear input {} weight {} bias {}",
            input.shape_str(),
            weight.shape_str(),
            bias.shape_str()
        ));
    }
    let mut out = input.matmul(weight)?;
    let c = out.cols();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += bias.data()[i % c];
    }
    Ok(out)
}

/// Rotates each consecutive pair `(x[2i], x[2i+1])` of every head of token `m`
/// by `positions[m] · base^(−2i/p)`. `x` has dims `[n, heads, p]`.
pub fn rope_rotate(x: &Tensor, positions: &[usize], base: f64) -> Result<Tensor> {
    if x.rank() != 3 {
        return shape_err(format!("rope expects [n, heads, p], got {}", x.shape_str()));
    }
    let (n, h, p) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    if p % 2 != 0 {
        return Err(Error::Config(format!("rope per-head dim {p} is odd")));
    }
    if positions.len() != n {
        return shape_err(format!("{} positions for {n} tokens", positions.len()));
    }
    let mut out = x.clone();
    kernels::rope_apply(out.data_mut(), n, h * p, p, positions, base, 1.0);
    Ok(out)
}

fn resolve_mask(cfg: &AttentionConfig, mask: Option<&[bool]>) -> AttnMask {
    match (mask, cfg.causal) {
        (Some(m), _) => AttnMask::Explicit(m.to_vec()),
        (None, true) => AttnMask::Causal,
        (None, false) => AttnMask::None,
    }
}

/// Multi-head attention on already projected (and rotated) `q`, `k`, `v`.
/// An explicit `mask` (`nq × nk`, `true` = visible) overrides `cfg.causal`.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, cfg: &AttentionConfig, mask: Option<&[bool]>) -> Result<Tensor> {
    attention_with_weights(q, k, v, cfg, mask).map(|(o, _)| o)
}

/// Like [`attention`], also returning one `nq × nk` weight matrix per head.
pub fn attention_with_weights(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    cfg: &AttentionConfig,
    mask: Option<&[bool]>,
) -> Result<(Tensor, Vec<Tensor>)> {
    if cfg.heads == 0 || !cfg.model_dim.is_multiple_of(cfg.heads) {
        return Err(Error::Config(format!(
            "model dim {} not divisible by {} heads",
            cfg.model_dim, cfg.heads
        )));
    }
    let d = cfg.model_dim;
    if q.cols() != d || k.cols() != d || v.cols() != d || k.rows() != v.rows() {
        return shape_err(format!(
            "attention q {} k {} v {} with model dim {d}",
            q.shape_str(),
            k.shape_str(),
            v.shape_str()
        ));
    }
    let (nq, nk) = (q.rows(), k.rows());
    if let Some(m) = mask {
        if m.len() != nq * nk {
            return shape_err(format!("mask of {} entries for {nq}×{nk} scores", m.len()));
        }
    }
    let mask = resolve_mask(cfg, mask);
    let (out, w) = kernels::attention_forward(q.data(), k.data(), v.data(), nq, nk, d, cfg.heads, &mask);
    let weights = w
        .chunks_exact(nq * nk)
        .map(|c| Tensor::matrix(nq, nk, c.to_vec()))
        .collect::<Result<_>>()?;
    Ok((Tensor::matrix(nq, d, out)?, weights))
}

/// Row-wise layer normalization followed by `gain ⊙ x̂ + offset`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, offset: &Tensor, eps: f64) -> Result<Tensor> {
    let (rows, cols) = (x.rows(), x.cols());
    if gain.len() != cols || offset.len() != cols {
        return shape_err(format!(
            "layer norm gain {} offset {} for input {}",
            gain.shape_str(),
            offset.shape_str(),
            x.shape_str()
        ));
    }
    let (xhat, _) = kernels::normalize_rows(x.data(), rows, cols, eps);
    let out = xhat
        .iter()
        .enumerate()
        .map(|(i, h)| gain.data()[i % cols] * h + offset.data()[i % cols])
        .collect();
    Tensor::new(x.dims().to_vec(), out)
}

/// Inverted dropout: with an rng, zeroes each entry with probability `p`
/// and rescales survivors by `1/(1−p)`; without one it is the identity.
pub fn dropout(g: &mut Graph<'_>, x: Var, p: f64, rng: Option<&mut impl Rng>) -> Result<Var> {
    let Some(rng) = rng else { return Ok(x) };
    if p <= 0.0 {
        return Ok(x);
    }
    if p >= 1.0 {
        return Err(Error::Config(format!("dropout probability {p} must be below 1")));
    }
    let dims = g.value(x).dims().to_vec();
    let keep = 1.0 / (1.0 - p);
    let n = g.value(x).len();
    let mask: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
    let mask = g.constant(Tensor::new(dims, mask)?);
    g.mul(x, mask)
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), xavier(rng, fan_in, fan_out)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[fan_out])),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let y = g.matmul(x, w)?;
        g.add_bias(y, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub offset: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[dim], 1.0)),
            offset: store.add(format!("{name}.offset"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let gain = g.param(self.gain);
        let offset = g.param(self.offset);
        g.layer_norm(x, gain, offset, LN_EPS)
    }
}

/// Projected multi-head attention with rotary positions on queries and keys.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub cfg: AttentionConfig,
}

/// Keys and values projected once and reused across queries.
#[derive(Clone, Copy, Debug)]
pub struct KeyValue {
    pub k: Var,
    pub v: Var,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, cfg: AttentionConfig, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.model_dim;
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, rng),
            cfg,
        })
    }

    pub fn key_value(&self, g: &mut Graph<'_>, x: Var, positions: &[usize]) -> Result<KeyValue> {
        let k = self.k.forward(g, x)?;
        let k = g.rope(k, self.cfg.head_dim(), positions, ROPE_BASE)?;
        let v = self.v.forward(g, x)?;
        Ok(KeyValue { k, v })
    }

    pub fn attend(&self, g: &mut Graph<'_>, x: Var, positions: &[usize], kv: KeyValue) -> Result<Var> {
        let q = self.q.forward(g, x)?;
        let q = g.rope(q, self.cfg.head_dim(), positions, ROPE_BASE)?;
        let mask = if self.cfg.causal {
            AttnMask::Causal
        } else {
            AttnMask::None
        };
        let a = g.attention(q, kv.k, kv.v, self.cfg.heads, &mask)?;
        self.o.forward(g, a)
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, positions: &[usize]) -> Result<Var> {
        let kv = self.key_value(g, x, positions)?;
        self.attend(g, x, positions, kv)
    }
}

/// Two-layer GELU MLP with a 4× expansion.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            up: Linear::new(store, &format!("{name}.up"), dim, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let h = self.up.forward(g, x)?;
        let h = g.gelu(h);
        self.down.forward(g, h)
    }
}

/// Pre-norm self-attention block.
#[derive(Clone, Debug)]
pub struct EncoderBlock {
    pub norm1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub mlp: FeedForward,
}

impl EncoderBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        let cfg = AttentionConfig {
            model_dim: dim,
            heads,
            causal: false,
        };
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            mlp: FeedForward::new(store, &format!("{name}.mlp"), dim, 4 * dim, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, positions: &[usize]) -> Result<Var> {
        let h = self.norm1.forward(g, x)?;
        let h = self.attn.forward(g, h, positions)?;
        let x = g.add(x, h)?;
        let h = self.norm2.forward(g, x)?;
        let h = self.mlp.forward(g, h)?;
        g.add(x, h)
    }
}

/// Pre-norm block with causal self-attention and cross-attention.
#[derive(Clone, Debug)]
pub struct DecoderBlock {
    pub norm1: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub norm2: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub norm3: LayerNorm,
    pub mlp: FeedForward,
}

impl DecoderBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, rng: &mut impl Rng) -> Result<Self> {
        let causal = AttentionConfig {
            model_dim: dim,
            heads,
            causal: true,
        };
        let cross = AttentionConfig {
            causal: false,
            ..causal
        };
        Ok(Self {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), dim),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), causal, rng)?,
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), dim),
            cross_attn: MultiHeadAttention::new(store, &format!("{name}.cross_attn"), cross, rng)?,
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), dim),
            mlp: FeedForward::new(store, &format!("{name}.mlp"), dim, 4 * dim, rng),
        })
    }

    /// Cross-attention keys/values over the encoder output.
    pub fn memory(&self, g: &mut Graph<'_>, enc: Var, positions: &[usize]) -> Result<KeyValue> {
        self.cross_attn.key_value(g, enc, positions)
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var, positions: &[usize], memory: KeyValue) -> Result<Var> {
        let h = self.norm1.forward(g, x)?;
        let h = self.self_attn.forward(g, h, positions)?;
        let x = g.add(x, h)?;
        let h = self.norm2.forward(g, x)?;
        let h = self.cross_attn.attend(g, h, positions, memory)?;
        let x = g.add(x, h)?;
        let h = self.norm3.forward(g, x)?;
        let h = self.mlp.forward(g, h)?;
        g.add(x, h)
    }
}

/// Single-layer GRU; [`Gru::forward`] returns the final hidden state.
#[derive(Clone, Debug)]
pub struct Gru {
    xz: Linear,
    xr: Linear,
    xn: Linear,
    hz: Linear,
    hr: Linear,
    hn: Linear,
    hidden: usize,
}

impl Gru {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut lin = |suffix: &str, fan_in| Linear::new(store, &format!("{name}.{suffix}"), fan_in, hidden, rng);
        Self {
            xz: lin("xz", input),
            xr: lin("xr", input),
            xn: lin("xn", input),
            hz: lin("hz", hidden),
            hr: lin("hr", hidden),
            hn: lin("hn", hidden),
            hidden,
        }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let steps = g.value(x).rows();
        let mut h = g.constant(Tensor::zeros(&[1, self.hidden]));
        for t in 0..steps {
            let xt = g.slice_rows(x, t, 1)?;
            let z = {
                let a = self.xz.forward(g, xt)?;
                let b = self.hz.forward(g, h)?;
                let s = g.add(a, b)?;
                g.sigmoid(s)
            };
            let r = {
                let a = self.xr.forward(g, xt)?;
                let b = self.hr.forward(g, h)?;
                let s = g.add(a, b)?;
                g.sigmoid(s)
            };
            let n = {
                let a = self.xn.forward(g, xt)?;
                let b = self.hn.forward(g, h)?;
                let rb = g.mul(r, b)?;
                let s = g.add(a, rb)?;
                g.tanh(s)
            };
            // h' = (1 − z) ⊙ n + z ⊙ h
            let one_minus_z = g.affine(z, -1.0, 1.0);
            let keep = g.mul(one_minus_z, n)?;
            let carry = g.mul(z, h)?;
            h = g.add(keep, carry)?;
        }
        Ok(h)
    }
}

/// 1-D convolution over rows (time), channels in columns.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub proj: Linear,
    pub kernel: usize,
    pub dilation: usize,
    pub pad: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        pad: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            proj: Linear::new(store, name, kernel * in_ch, out_ch, rng),
            kernel,
            dilation,
            pad,
        }
    }

    pub fn receptive_field(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let u = g.unfold(x, self.kernel, self.dilation, self.pad)?;
        self.proj.forward(g, u)
    }
}

/// Batch normalization with running statistics for evaluation.
#[derive(Clone, Debug)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BatchNorm1d {
    pub const EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
        }
    }

    /// Training mode normalizes with batch statistics and returns them so the
    /// caller can fold them into the running averages.
    pub fn forward_train(&self, g: &mut Graph<'_>, x: Var) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.batch_norm(x, gamma, beta, Self::EPS, None)
    }

    pub fn forward_eval(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        let stats = Some((self.running_mean.as_slice(), self.running_var.as_slice()));
        g.batch_norm(x, gamma, beta, Self::EPS, stats).map(|(v, _, _)| v)
    }

    pub fn update_running(&mut self, mean: &[f64], var: &[f64], count: usize) {
        // unbiased variance for the running estimate, as is conventional
        let unbias = if count > 1 {
            count as f64 / (count - 1) as f64
        } else {
            1.0
        };
        let m = self.momentum;
        for (r, v) in self.running_mean.iter_mut().zip(mean) {
            *r = (1.0 - m) * *r + m * v;
        }
        for (r, v) in self.running_var.iter_mut().zip(var) {
            *r = (1.0 - m) * *r + m * v * unbias;
        }
    }
}
