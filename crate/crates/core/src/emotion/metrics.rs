use serde::{Deserialize, Serialize};

use crate::data::{Behavior, VadLabel};
use crate::error::{shape_err, Error, Result};
use crate::stats::{mean, pearson, std_sample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VadMetrics {
    /// Mean over samples of the mean absolute error over V, A and D.
    pub mae: f64,
    /// Pearson correlation over all pooled (sample, dimension) pairs.
    pub pearson_r: Option<f64>,
}

pub fn vad_metrics(preds: &[VadLabel], labels: &[VadLabel]) -> Result<VadMetrics> {
    if preds.is_empty() || preds.len() != labels.len() {
        return shape_err(format!("{} VAD predictions for {} labels", preds.len(), labels.len()));
    }
    let per_sample: Vec<f64> = preds
        .iter()
        .zip(labels)
        .map(|(p, l)| {
            let (p, l) = (p.to_array(), l.to_array());
            (0..3).map(|k| (p[k] - l[k]).abs()).sum::<f64>() / 3.0
        })
        .collect();
    let xs: Vec<f64> = preds.iter().flat_map(|p| p.to_array()).collect();
    let ys: Vec<f64> = labels.iter().flat_map(|l| l.to_array()).collect();
    Ok(VadMetrics {
        mae: mean(&per_sample),
        pearson_r: pearson(&xs, &ys),
    })
}

/// Unweighted mean of the per-class F1 over laugh, sigh and cry. A class
/// with no true or predicted samples scores 0.
pub fn macro_f1(preds: &[Behavior], labels: &[Behavior]) -> Result<f64> {
    if preds.is_empty() || preds.len() != labels.len() {
        return shape_err(format!(
            "{} behavior predictions for {} labels",
            preds.len(),
            labels.len()
        ));
    }
    let mut tp = [0usize; 3];
    let mut fp = [0usize; 3];
    let mut fn_ = [0usize; 3];
    for (p, l) in preds.iter().zip(labels) {
        if p == l {
            tp[p.index()] += 1;
        } else {
            fp[p.index()] += 1;
            fn_[l.index()] += 1;
        }
    }
    let f1 = |c: usize| {
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        }
    };
    Ok((0..3).map(f1).sum::<f64>() / 3.0)
}

/// Mean and sample standard deviation of repeated runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no runs to summarize".into()));
    }
    Ok(Summary {
        mean: mean(values),
        std: std_sample(values),
        runs: values.len(),
    })
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}
