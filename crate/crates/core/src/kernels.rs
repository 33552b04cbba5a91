//! Forward and backward kernels shared by the eager functions in [`crate::nn`]
//! and the graph ops in [`crate::autodiff`].

use crate::tensor::{matmul_at_into, matmul_bt_into};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Quadratic inside `|r| <= delta`, linear outside.
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub(crate) fn huber_grad(r: f64, delta: f64) -> f64 {
    if r.abs() <= delta {
        r
    } else {
        delta * r.signum()
    }
}

/// Normalizes each row of a `rows × cols` block. Returns the normalized
/// values and the per-row reciprocal standard deviation.
pub(crate) fn normalize_rows(x: &[f64], rows: usize, cols: usize, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; rows * cols];
    let mut inv = vec![0.0; rows];
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv[r] = is;
        for (o, v) in xhat[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = (v - mean) * is;
        }
    }
    (xhat, inv)
}

/// Gradient of row normalization: `dx = inv · (dxhat − mean(dxhat) − xhat·mean(dxhat·xhat))`.
pub(crate) fn normalize_rows_backward(
    dxhat: &[f64],
    xhat: &[f64],
    inv: &[f64],
    rows: usize,
    cols: usize,
    dx: &mut [f64],
) {
    let n = cols as f64;
    for r in 0..rows {
        let s = r * cols..(r + 1) * cols;
        let (dh, h) = (&dxhat[s.clone()], &xhat[s.clone()]);
        let m1 = dh.iter().sum::<f64>() / n;
        let m2 = dh.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / n;
        for ((o, a), b) in dx[s].iter_mut().zip(dh).zip(h) {
            *o += inv[r] * (a - m1 - b * m2);
        }
    }
}

/// Rotates consecutive pairs within each head of every row. `sign = -1`
/// applies the inverse rotation.
pub(crate) fn rope_apply(
    data: &mut [f64],
    rows: usize,
    cols: usize,
    head_dim: usize,
    positions: &[usize],
    base: f64,
    sign: f64,
) {
    let half = head_dim / 2;
    let thetas: Vec<f64> = (0..half)
        .map(|i| base.powf(-2.0 * i as f64 / head_dim as f64))
        .collect();
    for r in 0..rows {
        let m = positions[r] as f64;
        if m == 0.0 {
            continue;
        }
        let row = &mut data[r * cols..(r + 1) * cols];
        for head in row.chunks_exact_mut(head_dim) {
            for (i, theta) in thetas.iter().enumerate() {
                let (s, c) = (sign * m * theta).sin_cos();
                let a = head[2 * i];
                let b = head[2 * i + 1];
                head[2 * i] = a * c - b * s;
                head[2 * i + 1] = a * s + b * c;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum AttnMask {
    None,
    /// Query `i` sees key `j` iff `j <= i + (keys - queries)`.
    Causal,
    /// Row-major `queries × keys`, `true` = visible.
    Explicit(Vec<bool>),
}

impl AttnMask {
    fn visible(&self, i: usize, j: usize, nq: usize, nk: usize) -> bool {
        match self {
            AttnMask::None => true,
            AttnMask::Causal => j + nq <= i + nk,
            AttnMask::Explicit(m) => m[i * nk + j],
        }
    }
}

/// Scaled dot-product attention over `heads` column groups.
/// Returns the concatenated head outputs (`nq × d`) and the attention
/// weights laid out `heads × nq × nk`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    nq: usize,
    nk: usize,
    d: usize,
    heads: usize,
    mask: &AttnMask,
) -> (Vec<f64>, Vec<f64>) {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut out = vec![0.0; nq * d];
    let mut weights = vec![0.0; heads * nq * nk];
    let mut scores = vec![0.0; nk];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..nq {
            let qi = &q[i * d + off..i * d + off + hd];
            let mut max = f64::NEG_INFINITY;
            for (j, s) in scores.iter_mut().enumerate() {
                if mask.visible(i, j, nq, nk) {
                    let kj = &k[j * d + off..j * d + off + hd];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    max = max.max(*s);
                } else {
                    *s = f64::NEG_INFINITY;
                }
            }
            let w = &mut weights[(h * nq + i) * nk..(h * nq + i + 1) * nk];
            if max == f64::NEG_INFINITY {
                continue;
            }
            let mut total = 0.0;
            for (wj, s) in w.iter_mut().zip(&scores) {
                *wj = if s.is_finite() { (s - max).exp() } else { 0.0 };
                total += *wj;
            }
            let o = &mut out[i * d + off..i * d + off + hd];
            for (j, wj) in w.iter_mut().enumerate() {
                *wj /= total;
                if *wj != 0.0 {
                    let vj = &v[j * d + off..j * d + off + hd];
                    for (oo, vv) in o.iter_mut().zip(vj) {
                        *oo += *wj * vv;
                    }
                }
            }
        }
    }
    (out, weights)
}

/// Accumulates gradients of [`attention_forward`] into `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    weights: &[f64],
    dout: &[f64],
    nq: usize,
    nk: usize,
    d: usize,
    heads: usize,
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let hd = d / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut dw = vec![0.0; nk];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..nq {
            let w = &weights[(h * nq + i) * nk..(h * nq + i + 1) * nk];
            let g = &dout[i * d + off..i * d + off + hd];
            // dW_ij = g · v_j ; dV_j += W_ij g
            for j in 0..nk {
                let vj = &v[j * d + off..j * d + off + hd];
                dw[j] = g.iter().zip(vj).map(|(a, b)| a * b).sum();
                if w[j] != 0.0 {
                    let dvj = &mut dv[j * d + off..j * d + off + hd];
                    for (o, gg) in dvj.iter_mut().zip(g) {
                        *o += w[j] * gg;
                    }
                }
            }
            let dot: f64 = w.iter().zip(&dw).map(|(a, b)| a * b).sum();
            for j in 0..nk {
                let ds = w[j] * (dw[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in 0..hd {
                    dq[i * d + off + c] += ds * k[j * d + off + c];
                    dk[j * d + off + c] += ds * q[i * d + off + c];
                }
            }
        }
    }
}

/// `rows × cols` input unfolded for a 1-D convolution: output row `t` holds
/// input rows `t - pad + kk·dilation` for `kk` in `0..kernel` (zeros outside).
pub(crate) fn unfold_forward(
    x: &[f64],
    rows: usize,
    cols: usize,
    kernel: usize,
    dilation: usize,
    pad: usize,
) -> (Vec<f64>, usize) {
    let span = dilation * (kernel - 1);
    let out_rows = rows + 2 * pad - span;
    let width = kernel * cols;
    let mut out = vec![0.0; out_rows * width];
    for t in 0..out_rows {
        for kk in 0..kernel {
            let src = t + kk * dilation;
            if src < pad || src - pad >= rows {
                continue;
            }
            let src = src - pad;
            out[t * width + kk * cols..t * width + (kk + 1) * cols].copy_from_slice(&x[src * cols..(src + 1) * cols]);
        }
    }
    (out, out_rows)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn unfold_backward(
    dout: &[f64],
    rows: usize,
    cols: usize,
    kernel: usize,
    dilation: usize,
    pad: usize,
    out_rows: usize,
    dx: &mut [f64],
) {
    let width = kernel * cols;
    for t in 0..out_rows {
        for kk in 0..kernel {
            let src = t + kk * dilation;
            if src < pad || src - pad >= rows {
                continue;
            }
            let src = src - pad;
            for c in 0..cols {
                dx[src * cols + c] += dout[t * width + kk * cols + c];
            }
        }
    }
}

pub(crate) fn matmul_grads(
    a: &[f64],
    b: &[f64],
    dout: &[f64],
    n: usize,
    k: usize,
    m: usize,
    da: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    if let Some(da) = da {
        matmul_bt_into(dout, b, da, n, m, k);
    }
    if let Some(db) = db {
        matmul_at_into(a, dout, db, n, k, m);
    }
}
