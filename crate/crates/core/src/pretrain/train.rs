use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::{compute_norm_stats, extract_windows, normalize, GazeSequence, GazeWindow, NormStats, WindowSpec};
use crate::error::{config_err, shape_err, Error, Result};
use crate::model::{predict_previous, Glass, GlassConfig};
use crate::params::ParamStore;
use crate::pretrain::loss::{joint_loss_graph, LossConfig};
use crate::pretrain::optim::{clip_grad_norm, AdamW};
use crate::pretrain::schedule::{lr_at, tf_probability, OptimConfig, SamplingSchedule};
use crate::stats::pearson;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub schedule: SamplingSchedule,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Steps between validations; 0 validates once per epoch.
    pub eval_every: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            optim: OptimConfig::default(),
            schedule: SamplingSchedule::default(),
            batch_size: 32,
            clip_norm: 1.0,
            eval_every: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.optim.validate()?;
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return config_err("batch size must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return config_err(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        Ok(())
    }
}

/// Normalized forecasting windows for training and validation.
#[derive(Clone, Debug)]
pub struct PretrainData {
    pub train: Vec<GazeWindow>,
    pub val: Vec<GazeWindow>,
    /// Statistics of the training sequences, applied to both splits.
    pub norm: NormStats,
}

/// Normalizes both splits with training statistics and cuts windows.
/// Validation subjects must not appear in the training split.
pub fn prepare_windows(train: &[GazeSequence], val: &[GazeSequence], spec: &WindowSpec) -> Result<PretrainData> {
    let train_ids: HashSet<&str> = train.iter().map(|s| s.subject_id.as_str()).collect();
    if let Some(s) = val.iter().find(|s| train_ids.contains(s.subject_id.as_str())) {
        return config_err(format!(
            "validation subject `{}` also appears in training",
            s.subject_id
        ));
    }
    let norm = compute_norm_stats(train)?;
    let cut = |seqs: &[GazeSequence]| -> Result<Vec<GazeWindow>> {
        let mut out = Vec::new();
        for s in seqs {
            out.extend(extract_windows(&normalize(s, &norm), spec)?);
        }
        Ok(out)
    };
    let (train, val) = (cut(train)?, cut(val)?);
    if train.is_empty() || val.is_empty() {
        return config_err(format!(
            "need at least one training and one validation window, got {} and {}",
            train.len(),
            val.len()
        ));
    }
    Ok(PretrainData { train, val, norm })
}

/// Pearson correlation over every (window, frame, dim) value pair, or `None`
/// when either side has zero variance.
pub fn gaze_correlation(preds: &[Tensor], targets: &[Tensor]) -> Result<Option<f64>> {
    if preds.is_empty() || preds.len() != targets.len() {
        return shape_err(format!("{} predictions for {} targets", preds.len(), targets.len()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (p, t) in preds.iter().zip(targets) {
        if p.dims() != t.dims() {
            return shape_err(format!("prediction {} vs target {}", p.shape_str(), t.shape_str()));
        }
        xs.extend_from_slice(p.data());
        ys.extend_from_slice(t.data());
    }
    Ok(pearson(&xs, &ys))
}

fn targets(windows: &[GazeWindow]) -> Result<Vec<Tensor>> {
    windows
        .iter()
        .map(|w| {
            w.target
                .clone()
                .ok_or_else(|| Error::Contract("forecasting window without target".into()))
        })
        .collect()
}

/// Autoregressive validation correlation of `model` on `windows`.
pub fn evaluate_forecast(model: &Glass, windows: &[GazeWindow]) -> Result<Option<f64>> {
    let preds = windows
        .iter()
        .map(|w| model.forecast(&w.input))
        .collect::<Result<Vec<_>>>()?;
    gaze_correlation(&preds, &targets(windows)?)
}

/// Correlation of the predict-previous baseline on `windows`.
pub fn baseline_correlation(windows: &[GazeWindow]) -> Result<Option<f64>> {
    let targets = targets(windows)?;
    let preds = windows
        .iter()
        .zip(&targets)
        .map(|(w, t)| predict_previous(&w.input, t.rows()))
        .collect::<Result<Vec<_>>>()?;
    gaze_correlation(&preds, &targets)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub tf_prob: f64,
    /// Mean training loss since the previous row.
    pub train_loss: f64,
    pub val_corr: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
    /// Mean batch loss of every optimizer step.
    pub step_losses: Vec<f64>,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,lr,tf_prob,train_loss,val_corr")?;
        for r in &self.rows {
            let corr = r.val_corr.map(|c| c.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", r.step, r.lr, r.tf_prob, r.train_loss, corr)?;
        }
        Ok(())
    }
}

pub struct PretrainOutcome {
    /// Parameters with the best validation correlation.
    pub model: Glass,
    pub log: TrainLog,
    pub best_val_corr: Option<f64>,
    pub best_step: usize,
    pub baseline_corr: Option<f64>,
}

/// Accumulates the mean joint-loss gradient of `batch` into the store and
/// returns the mean loss.
pub fn accumulate_batch(
    model: &mut Glass,
    batch: &[&GazeWindow],
    loss_cfg: &LossConfig,
    tf_prob: f64,
    tf_rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for w in batch {
        let target = w
            .target
            .as_ref()
            .ok_or_else(|| Error::Contract("training window without target".into()))?;
        let grads = {
            let mut g = Graph::with_params(model.store());
            let pred = model.forward_graph(&mut g, &w.input, Some(target), tf_prob, tf_rng)?;
            let loss = joint_loss_graph(&mut g, pred, target, loss_cfg)?;
            total += g.value(loss).item();
            g.backward(loss)?
        };
        model.store_mut().accumulate(&grads, scale);
    }
    Ok(total * scale)
}

fn snapshot(store: &ParamStore) -> Vec<Tensor> {
    store.iter().map(|(_, p)| p.value.clone()).collect()
}

/// Trains a fresh model on `data` and returns the parameters with the best
/// autoregressive validation correlation. Data order and teacher-forcing
/// draws use separate streams derived from `seed`.
pub fn run_pretraining(
    model_cfg: &GlassConfig,
    data: &PretrainData,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    model_cfg.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return config_err("empty training or validation split");
    }
    let first = &data.train[0];
    let target_rows = first.target.as_ref().map_or(0, |t| t.rows());
    if first.input.rows() != model_cfg.input_frames || target_rows != model_cfg.output_frames {
        return config_err(format!(
            "windows are {}→{} frames but the model expects {}→{}",
            first.input.rows(),
            target_rows,
            model_cfg.input_frames,
            model_cfg.output_frames
        ));
    }

    let mut model = Glass::new(model_cfg.clone(), seed)?;
    let mut opt = AdamW::new(model.store(), cfg.optim);
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    data_rng.set_stream(1);
    let mut tf_rng = ChaCha8Rng::seed_from_u64(seed);
    tf_rng.set_stream(2);

    let total = cfg.optim.total_steps;
    let batch = cfg.batch_size.min(data.train.len());
    let per_epoch = data.train.len().div_ceil(batch);
    let eval_every = if cfg.eval_every == 0 { per_epoch } else { cfg.eval_every };

    let baseline_corr = baseline_correlation(&data.val)?;
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut since_log = Vec::new();

    for step in 0..total {
        if cursor >= order.len() {
            order = (0..data.train.len()).collect();
            order.shuffle(&mut data_rng);
            cursor = 0;
        }
        let end = (cursor + batch).min(order.len());
        let windows: Vec<&GazeWindow> = order[cursor..end].iter().map(|&i| &data.train[i]).collect();
        cursor = end;

        let tf = tf_probability(step as f64 / total as f64, &cfg.schedule);
        let lr = lr_at(step + 1, &cfg.optim);
        model.store_mut().zero_grad();
        let loss = accumulate_batch(&mut model, &windows, &cfg.loss, tf, &mut tf_rng)?;
        clip_grad_norm(model.store_mut(), cfg.clip_norm);
        opt.step(model.store_mut(), lr)?;
        model.store_mut().round_to_f32();
        log.step_losses.push(loss);
        since_log.push(loss);

        if (step + 1) % eval_every == 0 || step + 1 == total {
            let corr = evaluate_forecast(&model, &data.val)?;
            let score = corr.unwrap_or(f64::NEG_INFINITY);
            if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                best = Some((score, step + 1, snapshot(model.store())));
            }
            log.rows.push(LogRow {
                step: step + 1,
                lr,
                tf_prob: tf,
                train_loss: since_log.iter().sum::<f64>() / since_log.len() as f64,
                val_corr: corr,
            });
            since_log.clear();
        }
    }

    let (score, best_step, values) = best.expect("at least one validation");
    for ((_, p), v) in model.store_mut().iter_mut().zip(values) {
        p.value = v;
    }
    Ok(PretrainOutcome {
        model,
        log,
        best_val_corr: score.is_finite().then_some(score),
        best_step,
        baseline_corr,
    })
}
