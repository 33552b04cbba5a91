use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{config_err, shape_err, Result};
pub use crate::kernels::huber;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the velocity term.
    pub lambda: f64,
    pub huber_delta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            huber_delta: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return config_err(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return config_err(format!("huber delta must be positive, got {}", self.huber_delta));
        }
        Ok(())
    }
}

fn check_shapes(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.dims() != target.dims() || pred.rows() < 2 {
        return shape_err(format!(
            "loss needs equal shapes with at least 2 frames, got {} and {}",
            pred.shape_str(),
            target.shape_str()
        ));
    }
    Ok(())
}

/// Coordinate and velocity terms `(L_c, L_v)`: mean Huber of the frame
/// residuals and of their first differences along time.
pub fn loss_terms(pred: &Tensor, target: &Tensor, cfg: &LossConfig) -> Result<(f64, f64)> {
    check_shapes(pred, target)?;
    let cols = pred.cols();
    let r: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let lc = r.iter().map(|&x| huber(x, cfg.huber_delta)).sum::<f64>() / r.len() as f64;
    let n_v = r.len() - cols;
    let lv = (0..n_v)
        .map(|i| huber(r[i + cols] - r[i], cfg.huber_delta))
        .sum::<f64>()
        / n_v as f64;
    Ok((lc, lv))
}

/// `L_c + λ·L_v`.
pub fn joint_loss(pred: &Tensor, target: &Tensor, cfg: &LossConfig) -> Result<f64> {
    let (lc, lv) = loss_terms(pred, target, cfg)?;
    Ok(lc + cfg.lambda * lv)
}

/// Graph version of [`joint_loss`].
pub fn joint_loss_graph(g: &mut Graph<'_>, pred: Var, target: &Tensor, cfg: &LossConfig) -> Result<Var> {
    check_shapes(g.value(pred), target)?;
    let t = g.constant(target.clone());
    let r = g.sub(pred, t)?;
    let hc = g.huber(r, cfg.huber_delta);
    let lc = g.mean(hc);
    let dr = g.row_diff(r)?;
    let hv = g.huber(dr, cfg.huber_delta);
    let lv = g.mean(hv);
    let lv = g.scale(lv, cfg.lambda);
    g.add(lc, lv)
}

/// Identifies which residuals of the joint loss sit on the linear Huber
/// branch. Finite differences are only valid where this does not change.
pub fn kink_signature(pred: &Tensor, target: &Tensor, cfg: &LossConfig) -> u64 {
    let cols = pred.cols();
    let r: Vec<f64> = pred.data().iter().zip(target.data()).map(|(p, t)| p - t).collect();
    let linear = r
        .iter()
        .map(|x| x.abs() > cfg.huber_delta)
        .chain((0..r.len().saturating_sub(cols)).map(|i| (r[i + cols] - r[i]).abs() > cfg.huber_delta));
    // FNV-1a over the indices on the linear branch
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (i, on) in linear.enumerate() {
        if on {
            for b in (i as u64).to_le_bytes() {
                h = (h ^ b as u64).wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    fn target() -> Tensor {
        Tensor::matrix(4, 2, vec![0.1, -0.2, 0.4, 0.3, -0.5, 0.0, 0.9, 1.2]).unwrap()
    }

    #[test]
    fn huber_branches() {
        assert_eq!(huber(0.5, 1.0), 0.125);
        assert_eq!(huber(2.0, 1.0), 1.5);
        assert_eq!(huber(-2.0, 1.0), 1.5);
        for delta in [0.3, 1.0, 2.5] {
            assert!((huber(delta, delta) - 0.5 * delta * delta).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_offset_has_no_velocity_term() {
        let t = target();
        let cfg = LossConfig::default();
        assert_eq!(joint_loss(&t, &t, &cfg).unwrap(), 0.0);
        let shifted = t.map(|v| v + 0.5);
        let (lc, lv) = loss_terms(&shifted, &t, &cfg).unwrap();
        assert!(lv.abs() < 1e-15);
        assert!((lc - 0.125).abs() < 1e-15);
        assert!((joint_loss(&shifted, &t, &cfg).unwrap() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_is_coordinate_term() {
        let t = target();
        let p = t.map(|v| v * 1.7 - 0.3);
        let cfg = LossConfig {
            lambda: 0.0,
            ..LossConfig::default()
        };
        let (lc, _) = loss_terms(&p, &t, &cfg).unwrap();
        assert_eq!(joint_loss(&p, &t, &cfg).unwrap(), lc);
    }

    #[test]
    fn graph_matches_eager() {
        let t = target();
        let p = t.map(|v| v * -1.3 + 0.7);
        let cfg = LossConfig::default();
        let mut g = Graph::new();
        let pv = g.variable(p.clone());
        let l = joint_loss_graph(&mut g, pv, &t, &cfg).unwrap();
        assert!((g.value(l).item() - joint_loss(&p, &t, &cfg).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let t = target();
        assert!(joint_loss(&t.slice_rows(0, 3).unwrap(), &t, &LossConfig::default()).is_err());
    }
}
