use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::features::stat_features;
use crate::baselines::models::{CnnConfig, StatsMlp, TemporalCnn};
use crate::data::{Label, LabeledWindow, GAZE_DIMS};
use crate::emotion::{
    predict, prepare_training, score, split_indices, task_samples, train_downstream, DownstreamConfig, DownstreamModel,
    DownstreamResult, Task,
};
use crate::error::{config_err, Error, Result};
use crate::stats::{mean, std_pop};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    StatsEyes,
    StatsFace,
    Cnn,
}

impl BaselineKind {
    pub const ALL: [Self; 3] = [Self::StatsEyes, Self::StatsFace, Self::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            Self::StatsEyes => "stats_eyes",
            Self::StatsFace => "stats_face",
            Self::Cnn => "cnn",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub task: Task,
    /// Hidden width of the MLP on statistical features.
    pub hidden: usize,
    pub dropout: f64,
    pub cnn: CnnConfig,
    pub fps: f64,
    pub train: DownstreamConfig,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            task: Task::Vad,
            hidden: 64,
            dropout: 0.1,
            cnn: CnnConfig::default(),
            fps: crate::data::DEFAULT_FPS,
            train: DownstreamConfig::default(),
        }
    }
}

pub struct BaselineOutcome {
    pub result: DownstreamResult,
    pub losses: Vec<f64>,
    pub test: Vec<(usize, [f64; 3])>,
}

/// Column means and standard deviations of the training rows; constant
/// columns keep unit scale.
fn standardizer(rows: &[Vec<f64>], train: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let width = rows[0].len();
    (0..width)
        .map(|c| {
            let col: Vec<f64> = train.iter().map(|&i| rows[i][c]).collect();
            let s = std_pop(&col);
            (mean(&col), if s > 1e-12 { s } else { 1.0 })
        })
        .unzip()
}

fn run<M: DownstreamModel>(
    mut model: M,
    inputs: &[M::Input],
    labels: &[Label],
    split: (&[usize], &[usize]),
    cfg: &BaselineConfig,
    seed: u64,
) -> Result<(Vec<f64>, Vec<[f64; 3]>)> {
    let (train, test) = split;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let losses = train_downstream(&mut model, inputs, labels, train, &cfg.train, &mut rng)?;
    let test_inputs: Vec<&M::Input> = test.iter().map(|&i| &inputs[i]).collect();
    Ok((losses, predict(&model, &test_inputs)?))
}

/// Fits one baseline on the `cfg.task` samples of `dataset` with the same
/// split and upsampling protocol as the emotion heads.
pub fn fit_baseline(
    dataset: &[LabeledWindow],
    kind: BaselineKind,
    cfg: &BaselineConfig,
    split_seed: u64,
) -> Result<BaselineOutcome> {
    cfg.train.validate()?;
    let all_labels: Vec<Label> = dataset.iter().map(|s| s.label).collect();
    let positions = task_samples(&all_labels, cfg.task);
    if positions.is_empty() {
        return config_err(format!("no {} samples in the dataset", cfg.task));
    }
    let frames = dataset[positions[0]].window.input.rows();
    if let Some(&i) = positions.iter().find(|&&i| dataset[i].window.input.rows() != frames) {
        return config_err(format!(
            "windows differ in length: {} and {frames} frames",
            dataset[i].window.input.rows()
        ));
    }
    let labels: Vec<Label> = positions.iter().map(|&i| all_labels[i]).collect();
    let (train_raw, test) = split_indices(labels.len(), cfg.train.test_fraction, split_seed)?;
    let train = prepare_training(&labels, &train_raw, cfg.task, &cfg.train, split_seed)?;

    let (losses, outputs) = match kind {
        BaselineKind::StatsEyes | BaselineKind::StatsFace => {
            let face = kind == BaselineKind::StatsFace;
            let rows = positions
                .iter()
                .map(|&i| stat_features(&dataset[i].window, face))
                .collect::<Result<Vec<_>>>()?;
            let (mu, sd) = standardizer(&rows, &train_raw);
            let inputs = rows
                .iter()
                .map(|r| {
                    let z = r.iter().zip(&mu).zip(&sd).map(|((v, m), s)| (v - m) / s).collect();
                    Tensor::matrix(1, r.len(), z)
                })
                .collect::<Result<Vec<_>>>()?;
            let model = StatsMlp::new(rows[0].len(), cfg.hidden, cfg.dropout, cfg.task, split_seed);
            run(model, &inputs, &labels, (&train, &test), cfg, split_seed)?
        }
        BaselineKind::Cnn => {
            let inputs: Vec<Tensor> = positions.iter().map(|&i| dataset[i].window.input.clone()).collect();
            let model = TemporalCnn::new(GAZE_DIMS, &cfg.cnn, cfg.task, split_seed)?;
            run(model, &inputs, &labels, (&train, &test), cfg, split_seed)?
        }
    };
    let test_labels: Vec<&Label> = test.iter().map(|&i| &labels[i]).collect();
    let (mae, pearson_r, macro_f1) = score(cfg.task, &outputs, &test_labels)?;
    Ok(BaselineOutcome {
        result: DownstreamResult {
            seed: split_seed,
            task: cfg.task,
            head: kind.name().to_string(),
            chunk_seconds: None,
            input_seconds: frames as f64 / cfg.fps,
            mae,
            pearson_r,
            macro_f1,
        },
        losses,
        test: test.iter().map(|&i| positions[i]).zip(outputs).collect(),
    })
}
