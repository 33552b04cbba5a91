use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::{upsample_tail, Behavior, Label, VadLabel};
use crate::emotion::heads::Task;
use crate::emotion::metrics::{macro_f1, vad_metrics};
use crate::error::{config_err, Result};
use crate::params::{ParamId, ParamStore};
use crate::pretrain::{clip_grad_norm, lr_at, AdamW, OptimConfig};
use crate::tensor::Tensor;

/// Optimization and sampling settings shared by every downstream learner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownstreamConfig {
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub test_fraction: f64,
    /// Distance threshold, in label standard deviations, of the VAD tail.
    pub tail_sd: f64,
    /// Tail share of the VAD training set after upsampling.
    pub tail_ratio: f64,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        Self {
            optim: OptimConfig {
                base_lr: 1e-3,
                warmup_steps: 30,
                total_steps: 300,
                ..OptimConfig::default()
            },
            batch_size: 16,
            clip_norm: 1.0,
            test_fraction: 0.2,
            tail_sd: 2.0,
            tail_ratio: 1.0 / 3.0,
        }
    }
}

impl DownstreamConfig {
    pub fn validate(&self) -> Result<()> {
        self.optim.validate()?;
        if self.batch_size == 0 {
            return config_err("batch size must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return config_err(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return config_err(format!("test fraction {} outside (0, 1)", self.test_fraction));
        }
        if !(self.tail_ratio > 0.0 && self.tail_ratio < 1.0) || !(self.tail_sd >= 0.0) {
            return config_err("tail upsampling needs sd ≥ 0 and ratio in (0, 1)");
        }
        Ok(())
    }
}

/// One evaluated downstream run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownstreamResult {
    pub seed: u64,
    pub task: Task,
    /// Head kind, or baseline name.
    pub head: String,
    pub chunk_seconds: Option<f64>,
    pub input_seconds: f64,
    pub mae: Option<f64>,
    pub pearson_r: Option<f64>,
    pub macro_f1: Option<f64>,
}

pub const DOWNSTREAM_HEADER: &str = "seed,task,head,chunk_seconds,input_seconds,mae,pearson_r,macro_f1";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_downstream_csv<W: Write>(rows: &[DownstreamResult], mut w: W) -> Result<()> {
    writeln!(w, "{DOWNSTREAM_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            r.task,
            r.head,
            opt(r.chunk_seconds),
            r.input_seconds,
            opt(r.mae),
            opt(r.pearson_r),
            opt(r.macro_f1)
        )?;
    }
    Ok(())
}

/// Shuffles `0..n` and holds out `round(n · test_fraction)` samples (at
/// least one on each side).
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return config_err(format!("need at least 2 samples to split, got {n}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let test = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    let train = order.split_off(test);
    Ok((train, order))
}

/// Training indices after the task-specific preparation: VAD training sets
/// are tail-upsampled, behavior training sets must hold two classes.
pub fn prepare_training(
    labels: &[Label],
    train: &[usize],
    task: Task,
    cfg: &DownstreamConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    match task {
        Task::Vad => {
            let samples = train
                .iter()
                .map(|&i| match labels[i] {
                    Label::Vad(l) => Ok((i, l)),
                    Label::Behavior(_) => config_err("behavior label in a VAD dataset"),
                })
                .collect::<Result<Vec<(usize, VadLabel)>>>()?;
            let up = upsample_tail(samples, cfg.tail_sd, cfg.tail_ratio, seed)?;
            Ok(up.samples.into_iter().map(|(i, _)| i).collect())
        }
        Task::Behavior => {
            let mut seen = [false; 3];
            for &i in train {
                match labels[i] {
                    Label::Behavior(b) => seen[b.index()] = true,
                    Label::Vad(_) => return config_err("VAD label in a behavior dataset"),
                }
            }
            if seen.iter().filter(|&&s| s).count() < 2 {
                return config_err("behavior training set holds a single class");
            }
            Ok(train.to_vec())
        }
    }
}

/// A trainable map from one input to a `1 × 3` output.
pub trait DownstreamModel {
    type Input;
    /// Running statistics gathered by a training forward pass.
    type Aux;

    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn trainable(&self) -> Vec<ParamId>;
    /// Outputs for a batch; an rng selects training mode.
    fn forward_batch(
        &self,
        g: &mut Graph<'_>,
        inputs: &[&Self::Input],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<Var>, Option<Self::Aux>)>;
    fn observe(&mut self, _aux: Self::Aux) {}
}

fn sample_loss(g: &mut Graph<'_>, out: Var, label: &Label) -> Result<Var> {
    match label {
        Label::Vad(l) => {
            let t = g.constant(Tensor::matrix(1, 3, l.to_array().to_vec())?);
            let d = g.sub(out, t)?;
            let a = g.abs(d);
            Ok(g.mean(a))
        }
        Label::Behavior(b) => g.softmax_cross_entropy(out, b.index()),
    }
}

/// Minimizes MAE (VAD) or cross entropy (behavior) over `train`; returns
/// the per-step batch losses.
pub fn train_downstream<M: DownstreamModel>(
    model: &mut M,
    inputs: &[M::Input],
    labels: &[Label],
    train: &[usize],
    cfg: &DownstreamConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if train.is_empty() {
        return config_err("empty training set");
    }
    let mut opt = AdamW::for_params(model.store(), cfg.optim, model.trainable());
    let batch = cfg.batch_size.min(train.len());
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut losses = Vec::with_capacity(cfg.optim.total_steps);
    for step in 0..cfg.optim.total_steps {
        if cursor >= order.len() {
            order = train.to_vec();
            order.shuffle(rng);
            cursor = 0;
        }
        let end = (cursor + batch).min(order.len());
        let idx = &order[cursor..end];
        cursor = end;
        let batch_inputs: Vec<&M::Input> = idx.iter().map(|&i| &inputs[i]).collect();
        let (grads, loss, aux) = {
            let mut g = Graph::with_params(model.store());
            let (outs, aux) = model.forward_batch(&mut g, &batch_inputs, Some(rng))?;
            let mut total: Option<Var> = None;
            for (&o, &i) in outs.iter().zip(idx) {
                let l = sample_loss(&mut g, o, &labels[i])?;
                total = Some(match total {
                    None => l,
                    Some(t) => g.add(t, l)?,
                });
            }
            let loss = g.scale(total.expect("nonempty batch"), 1.0 / idx.len() as f64);
            let value = g.value(loss).item();
            (g.backward(loss)?, value, aux)
        };
        let store = model.store_mut();
        store.zero_grad();
        store.accumulate(&grads, 1.0);
        clip_grad_norm(store, cfg.clip_norm);
        opt.step(store, lr_at(step + 1, &cfg.optim))?;
        store.round_to_f32();
        if let Some(aux) = aux {
            model.observe(aux);
        }
        losses.push(loss);
    }
    Ok(losses)
}

/// Evaluation-mode outputs, one `[f64; 3]` per input.
pub fn predict<M: DownstreamModel>(model: &M, inputs: &[&M::Input]) -> Result<Vec<[f64; 3]>> {
    inputs
        .iter()
        .map(|x| {
            let mut g = Graph::with_params(model.store());
            let (outs, _) = model.forward_batch(&mut g, std::slice::from_ref(x), None)?;
            let v = g.value(outs[0]).data();
            Ok([v[0], v[1], v[2]])
        })
        .collect()
}

fn argmax(v: &[f64; 3]) -> Behavior {
    let mut best = 0;
    for k in 1..3 {
        if v[k] > v[best] {
            best = k;
        }
    }
    Behavior::ALL[best]
}

/// Metrics `(mae, pearson_r, macro_f1)` of outputs against labels.
pub fn score(task: Task, outputs: &[[f64; 3]], labels: &[&Label]) -> Result<(Option<f64>, Option<f64>, Option<f64>)> {
    match task {
        Task::Vad => {
            let preds = outputs
                .iter()
                .map(|o| VadLabel::from_array(o.map(|v| v.clamp(0.0, 1.0))))
                .collect::<Result<Vec<_>>>()?;
            let truth = labels
                .iter()
                .map(|l| match l {
                    Label::Vad(v) => Ok(*v),
                    Label::Behavior(_) => config_err("behavior label in a VAD evaluation"),
                })
                .collect::<Result<Vec<_>>>()?;
            let m = vad_metrics(&preds, &truth)?;
            Ok((Some(m.mae), m.pearson_r, None))
        }
        Task::Behavior => {
            let preds: Vec<Behavior> = outputs.iter().map(argmax).collect();
            let truth = labels
                .iter()
                .map(|l| match l {
                    Label::Behavior(b) => Ok(*b),
                    Label::Vad(_) => config_err("VAD label in a behavior evaluation"),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((None, None, Some(macro_f1(&preds, &truth)?)))
        }
    }
}

/// Labels of `task`'s kind, in order, with their dataset positions.
pub fn task_samples(labels: &[Label], task: Task) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            matches!(
                (task, l),
                (Task::Vad, Label::Vad(_)) | (Task::Behavior, Label::Behavior(_))
            )
        })
        .map(|(i, _)| i)
        .collect()
}
