use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::pretrain::schedule::OptimConfig;

/// AdamW with bias correction and decoupled weight decay.
#[derive(Clone, Debug)]
pub struct AdamW {
    cfg: OptimConfig,
    ids: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u32,
}

impl AdamW {
    pub fn new(store: &ParamStore, cfg: OptimConfig) -> Self {
        Self::for_params(store, cfg, store.ids().collect())
    }

    /// Optimizer that updates only `ids`; every other parameter is left
    /// untouched, including by weight decay.
    pub fn for_params(store: &ParamStore, cfg: OptimConfig, ids: Vec<ParamId>) -> Self {
        let zeros: Vec<Vec<f64>> = ids.iter().map(|&id| vec![0.0; store.value(id).len()]).collect();
        Self {
            cfg,
            ids,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// Applies one update with learning rate `lr` from the gradients held in
    /// `store`. Non-finite gradients abort the step before any parameter
    /// changes.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if let Some(p) = self.ids.iter().map(|&id| store.get(id)).find(|p| !p.grad.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter `{}`",
                p.name
            )));
        }
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, &id) in self.ids.iter().enumerate() {
            let p = store.get_mut(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let w = p.value.data_mut();
            for (j, &g) in p.grad.data().iter().enumerate() {
                w[j] -= lr * c.weight_decay * w[j];
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                w[j] -= lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_grad_norm(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for (_, p) in store.iter_mut() {
            p.grad.scale_assign(s);
        }
    }
    norm
}
