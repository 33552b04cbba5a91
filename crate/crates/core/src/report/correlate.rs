use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::report::metrics::{Metric, MetricRow};
use crate::stats::{mean, pearson};

/// Downstream metrics paired against validation gaze correlation. MAE
/// enters negated so that higher is better on every axis.
pub const DOWNSTREAM_AXES: [(Metric, &str); 3] = [
    (Metric::Mae, "neg_mae"),
    (Metric::PearsonR, "pearson_r"),
    (Metric::MacroF1, "macro_f1"),
];

/// One pretraining configuration with its mean downstream metrics.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatterPoint {
    pub config_hash: String,
    pub val_gaze_corr: f64,
    /// Indexed like [`DOWNSTREAM_AXES`].
    pub downstream: [Option<f64>; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationReport {
    pub points: Vec<ScatterPoint>,
    /// Pearson r per downstream axis; `None` with zero variance or fewer
    /// than three points on that axis.
    pub correlations: [Option<f64>; 3],
}

fn means_by_hash(rows: &[MetricRow], metric: Metric) -> BTreeMap<&str, f64> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == metric) {
        groups.entry(r.config_hash.as_str()).or_default().push(r.value);
    }
    groups.into_iter().map(|(k, v)| (k, mean(&v))).collect()
}

/// Joins pretraining and downstream rows on the configuration hash,
/// averaging repeated seeds, and correlates validation gaze correlation
/// with each downstream metric.
pub fn correlate_report(pretrain: &[MetricRow], downstream: &[MetricRow]) -> Result<CorrelationReport> {
    let val = means_by_hash(pretrain, Metric::ValGazeCorr);
    let axes: Vec<BTreeMap<&str, f64>> = DOWNSTREAM_AXES
        .iter()
        .map(|(m, _)| means_by_hash(downstream, *m))
        .collect();
    let points: Vec<ScatterPoint> = val
        .iter()
        .filter(|(h, _)| axes.iter().any(|a| a.contains_key(*h)))
        .map(|(h, &v)| ScatterPoint {
            config_hash: h.to_string(),
            val_gaze_corr: v,
            downstream: [0, 1, 2].map(|k| {
                axes[k]
                    .get(h)
                    .map(|&x| if DOWNSTREAM_AXES[k].0 == Metric::Mae { -x } else { x })
            }),
        })
        .collect();
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} configurations join pretraining and downstream rows; need 3",
            points.len()
        )));
    }
    let correlations = [0, 1, 2].map(|k| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = points
            .iter()
            .filter_map(|p| p.downstream[k].map(|y| (p.val_gaze_corr, y)))
            .unzip();
        if xs.len() < 3 {
            None
        } else {
            pearson(&xs, &ys)
        }
    });
    Ok(CorrelationReport { points, correlations })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl CorrelationReport {
    pub fn write_points_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "config_hash,val_gaze_corr,neg_mae,pearson_r,macro_f1")?;
        for p in &self.points {
            let [a, b, c] = p.downstream;
            writeln!(
                w,
                "{},{},{},{},{}",
                p.config_hash,
                p.val_gaze_corr,
                opt(a),
                opt(b),
                opt(c)
            )?;
        }
        Ok(())
    }

    pub fn write_correlations_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "metric,pearson_r,points")?;
        for (k, (_, name)) in DOWNSTREAM_AXES.iter().enumerate() {
            let n = self.points.iter().filter(|p| p.downstream[k].is_some()).count();
            writeln!(w, "{name},{},{n}", opt(self.correlations[k]))?;
        }
        Ok(())
    }

    /// `(val_gaze_corr, metric)` pairs of one axis.
    pub fn axis_points(&self, k: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.downstream[k].map(|y| (p.val_gaze_corr, y)))
            .collect()
    }
}
