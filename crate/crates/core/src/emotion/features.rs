use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{config_err, shape_err, Result};
use crate::tensor::Tensor;

/// Chunk length in seconds and the patch rate of the encoder states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub chunk_seconds: f64,
    /// Encoder states per second, `fps / P`.
    pub patch_rate: f64,
}

impl ChunkConfig {
    pub const STANDARD_SECONDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

    pub fn new(chunk_seconds: f64, fps: f64, patch: usize) -> Result<Self> {
        let cfg = Self {
            chunk_seconds,
            patch_rate: fps / patch as f64,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.chunk_seconds.is_finite() && self.patch_rate.is_finite()) || self.rows_per_chunk() < 1 {
            return config_err(format!(
                "chunks of {} s at {} patches/s hold no encoder state",
                self.chunk_seconds, self.patch_rate
            ));
        }
        Ok(())
    }

    pub fn rows_per_chunk(&self) -> usize {
        let r = (self.chunk_seconds * self.patch_rate).round();
        if r >= 1.0 {
            r as usize
        } else {
            0
        }
    }

    /// Row ranges of the chunks covering `rows` states.
    pub fn ranges(&self, rows: usize) -> Vec<std::ops::Range<usize>> {
        let k = self.rows_per_chunk().max(1);
        (0..rows).step_by(k).map(|s| s..(s + k).min(rows)).collect()
    }
}

/// `[emb | d1 | d2]` where `d1` is the central first difference (one-sided
/// at the edges) and `d2` the second central difference with edge rows
/// replicated from their neighbours.
pub fn encoder_features(enc: &Tensor) -> Result<Tensor> {
    let (n, d) = (enc.rows(), enc.cols());
    if n < 3 {
        return shape_err(format!(
            "derivative features need at least 3 rows, got {}",
            enc.shape_str()
        ));
    }
    let mut out = Tensor::zeros(&[n, 3 * d]);
    for i in 0..n {
        let (lo, hi, span) = match i {
            0 => (0, 1, 1.0),
            _ if i == n - 1 => (n - 2, n - 1, 1.0),
            _ => (i - 1, i + 1, 2.0),
        };
        let c = i.clamp(1, n - 2);
        for j in 0..d {
            out.set(i, j, enc.get(i, j));
            out.set(i, d + j, (enc.get(hi, j) - enc.get(lo, j)) / span);
            out.set(
                i,
                2 * d + j,
                enc.get(c + 1, j) - 2.0 * enc.get(c, j) + enc.get(c - 1, j),
            );
        }
    }
    Ok(out)
}

/// Mean of each chunk of rows; a trailing remainder forms a smaller chunk.
pub fn chunk(features: &Tensor, cfg: &ChunkConfig) -> Result<Tensor> {
    cfg.validate()?;
    if features.rows() == 0 {
        return shape_err("cannot chunk an empty feature sequence");
    }
    let rows: Vec<Vec<f64>> = cfg
        .ranges(features.rows())
        .into_iter()
        .map(|r| {
            let len = r.len() as f64;
            let mut acc = vec![0.0; features.cols()];
            for i in r {
                for (a, v) in acc.iter_mut().zip(features.row(i)) {
                    *a += v;
                }
            }
            acc.into_iter().map(|a| a / len).collect()
        })
        .collect();
    Tensor::from_rows(&rows)
}

/// Linear operators behind [`encoder_features`] and [`chunk`], for use
/// inside a graph.
fn difference_matrices(n: usize) -> (Tensor, Tensor) {
    let mut d1 = Tensor::zeros(&[n, n]);
    let mut d2 = Tensor::zeros(&[n, n]);
    for i in 0..n {
        match i {
            0 => {
                d1.set(0, 1, 1.0);
                d1.set(0, 0, -1.0);
            }
            _ if i == n - 1 => {
                d1.set(i, i, 1.0);
                d1.set(i, i - 1, -1.0);
            }
            _ => {
                d1.set(i, i + 1, 0.5);
                d1.set(i, i - 1, -0.5);
            }
        }
        let c = i.clamp(1, n - 2);
        d2.set(i, c + 1, 1.0);
        d2.set(i, c, -2.0);
        d2.set(i, c - 1, 1.0);
    }
    (d1, d2)
}

/// Graph version of `chunk(encoder_features(enc))`.
pub fn chunk_features_graph(g: &mut Graph<'_>, enc: Var, cfg: &ChunkConfig) -> Result<Var> {
    cfg.validate()?;
    let (n, d) = (g.value(enc).rows(), g.value(enc).cols());
    if n < 3 {
        return shape_err(format!("derivative features need at least 3 rows, got {n}"));
    }
    let (d1, d2) = difference_matrices(n);
    let place = |block: usize| {
        let mut s = Tensor::zeros(&[d, 3 * d]);
        for j in 0..d {
            s.set(j, block * d + j, 1.0);
        }
        s
    };
    let ranges = cfg.ranges(n);
    let mut pool = Tensor::zeros(&[ranges.len(), n]);
    for (c, r) in ranges.into_iter().enumerate() {
        let w = 1.0 / r.len() as f64;
        for i in r {
            pool.set(c, i, w);
        }
    }
    let mut parts = Vec::with_capacity(3);
    for (block, op) in [(0, None), (1, Some(d1)), (2, Some(d2))] {
        let rows = match op {
            None => enc,
            Some(m) => {
                let m = g.constant(m);
                g.matmul(m, enc)?
            }
        };
        let s = g.constant(place(block));
        parts.push(g.matmul(rows, s)?);
    }
    let f = g.add(parts[0], parts[1])?;
    let f = g.add(f, parts[2])?;
    let pool = g.constant(pool);
    g.matmul(pool, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, d: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, d]);
        for i in 0..n {
            for j in 0..d {
                t.set(i, j, (i * (j + 1)) as f64);
            }
        }
        t
    }

    #[test]
    fn constant_rows_have_zero_derivatives() {
        let f = encoder_features(&Tensor::full(&[5, 2], 0.7)).unwrap();
        assert_eq!(f.cols(), 6);
        for i in 0..5 {
            assert_eq!(&f.row(i)[2..], &[0.0; 4]);
        }
    }

    #[test]
    fn ramp_has_constant_velocity() {
        let f = encoder_features(&ramp(6, 2)).unwrap();
        for i in 0..6 {
            assert_eq!(&f.row(i)[2..4], &[1.0, 2.0]);
            assert_eq!(&f.row(i)[4..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn width_is_three_model_dims() {
        let f = encoder_features(&Tensor::zeros(&[10, 32])).unwrap();
        assert_eq!(f.dims(), &[10, 96]);
        assert!(encoder_features(&Tensor::zeros(&[2, 32])).is_err());
    }

    #[test]
    fn chunk_examples() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let f = Tensor::from_rows(&rows).unwrap();
        let one = ChunkConfig::new(1.0, 30.0, 15).unwrap();
        let c = chunk(&f, &one).unwrap();
        assert_eq!(c.data(), &[0.5, 2.5, 4.5, 6.5, 8.5]);
        let four = ChunkConfig::new(4.0, 30.0, 15).unwrap();
        let c = chunk(&f, &four).unwrap();
        assert_eq!(c.data(), &[3.5, 8.5]);
        let all = ChunkConfig::new(5.0, 30.0, 15).unwrap();
        assert_eq!(chunk(&f, &all).unwrap().data(), &[4.5]);
    }

    #[test]
    fn sub_patch_chunks_rejected() {
        assert!(ChunkConfig::new(0.2, 30.0, 15).is_err());
        assert!(ChunkConfig::new(0.5, 30.0, 15).is_ok());
    }

    #[test]
    fn graph_matches_eager() {
        let mut enc = ramp(7, 3);
        enc.set(3, 1, -4.0);
        enc.set(6, 0, 2.5);
        let cfg = ChunkConfig::new(2.0, 30.0, 15).unwrap();
        let eager = chunk(&encoder_features(&enc).unwrap(), &cfg).unwrap();
        let mut g = Graph::new();
        let x = g.constant(enc);
        let v = chunk_features_graph(&mut g, x, &cfg).unwrap();
        assert!(g.value(v).max_abs_diff(&eager) < 1e-12);
    }
}
