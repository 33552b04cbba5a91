use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub total_steps: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            base_lr: 3e-4,
            warmup_steps: 3000,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            total_steps: 10_000,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return config_err(format!(
                "warmup steps {} exceed total steps {}",
                self.warmup_steps, self.total_steps
            ));
        }
        if self.total_steps == 0 {
            return config_err("total steps must be positive");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return config_err(format!("base lr must be positive, got {}", self.base_lr));
        }
        if !(self.weight_decay >= 0.0) {
            return config_err(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return config_err(format!("betas ({}, {}) outside [0, 1)", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            return config_err("eps must be positive");
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at `total_steps`.
pub fn lr_at(step: usize, cfg: &OptimConfig) -> f64 {
    let step = step.min(cfg.total_steps);
    if step < cfg.warmup_steps {
        return cfg.base_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.total_steps - cfg.warmup_steps;
    if span == 0 {
        return cfg.base_lr;
    }
    let frac = (step - cfg.warmup_steps) as f64 / span as f64;
    cfg.base_lr * 0.5 * (1.0 + (PI * frac).cos())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSchedule {
    /// Fraction of training after which teacher forcing is off.
    pub end_fraction: f64,
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        Self { end_fraction: 0.6 }
    }
}

impl SamplingSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.end_fraction > 0.0 && self.end_fraction <= 1.0) {
            return config_err(format!("end fraction {} outside (0, 1]", self.end_fraction));
        }
        Ok(())
    }
}

/// Teacher-forcing probability at training progress `progress ∈ [0, 1]`.
pub fn tf_probability(progress: f64, sched: &SamplingSchedule) -> f64 {
    (1.0 - progress / sched.end_fraction).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tf_examples() {
        let s = SamplingSchedule::default();
        assert_eq!(tf_probability(0.0, &s), 1.0);
        assert!((tf_probability(0.3, &s) - 0.5).abs() < 1e-15);
        assert_eq!(tf_probability(0.6, &s), 0.0);
        assert_eq!(tf_probability(1.0, &s), 0.0);
    }

    #[test]
    fn lr_examples() {
        let cfg = OptimConfig::default();
        assert_eq!(lr_at(0, &cfg), 0.0);
        assert_eq!(lr_at(cfg.warmup_steps, &cfg), 3e-4);
        assert!(lr_at(cfg.total_steps, &cfg).abs() < 1e-20);
        assert!((lr_at(1500, &cfg) - 1.5e-4).abs() < 1e-18);
        let mid = (cfg.warmup_steps + cfg.total_steps) / 2;
        assert!((lr_at(mid, &cfg) - 1.5e-4).abs() < 1e-12);
    }

    #[test]
    fn warmup_beyond_total_rejected() {
        let cfg = OptimConfig {
            warmup_steps: 10,
            total_steps: 5,
            ..OptimConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
