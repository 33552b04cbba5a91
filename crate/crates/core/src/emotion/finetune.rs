use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::data::{Label, LabeledWindow};
use crate::emotion::downstream::{
    predict, prepare_training, score, split_indices, task_samples, train_downstream, DownstreamConfig, DownstreamModel,
    DownstreamResult,
};
use crate::emotion::features::{chunk, chunk_features_graph, encoder_features, ChunkConfig};
use crate::emotion::heads::{EmotionHead, HeadConfig, Task};
use crate::error::{config_err, Result};
use crate::model::Glass;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneConfig {
    pub head: HeadConfig,
    pub chunk_seconds: f64,
    /// Frame rate of the dataset windows.
    pub fps: f64,
    pub task: Task,
    /// Train the encoder together with the head.
    pub joint: bool,
    pub train: DownstreamConfig,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            head: HeadConfig::default(),
            chunk_seconds: 1.0,
            fps: crate::data::DEFAULT_FPS,
            task: Task::Vad,
            joint: false,
            train: DownstreamConfig::default(),
        }
    }
}

/// A window with its chunked features under the initial encoder.
#[derive(Clone, Debug)]
pub struct EmotionInput {
    pub window: Tensor,
    pub chunks: Tensor,
}

/// The encoder of a pretrained forecaster with its decoder replaced by an
/// emotion head. Head parameters share the encoder's store under `head.`.
#[derive(Clone, Debug)]
pub struct EmotionModel {
    glass: Glass,
    head: EmotionHead,
    chunk: ChunkConfig,
    joint: bool,
    head_ids: Vec<ParamId>,
}

impl EmotionModel {
    pub fn new(
        encoder: &Glass,
        head: &HeadConfig,
        task: Task,
        chunk: ChunkConfig,
        joint: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut glass = encoder.clone();
        let before = glass.store().len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let width = 3 * glass.config().model_dim;
        let head = EmotionHead::new(glass.store_mut(), "head", width, head, task, &mut rng)?;
        glass.store_mut().round_to_f32();
        let head_ids = glass.store().ids().skip(before).collect();
        Ok(Self {
            glass,
            head,
            chunk,
            joint,
            head_ids,
        })
    }

    pub fn glass(&self) -> &Glass {
        &self.glass
    }

    pub fn head(&self) -> &EmotionHead {
        &self.head
    }

    /// Chunked derivative features of the current encoder.
    pub fn chunk_features(&self, window: &Tensor) -> Result<Tensor> {
        chunk(&encoder_features(&self.glass.encode(window)?)?, &self.chunk)
    }

    pub fn input(&self, window: &Tensor) -> Result<EmotionInput> {
        Ok(EmotionInput {
            window: window.clone(),
            chunks: self.chunk_features(window)?,
        })
    }

    /// Evaluation-mode output for one window.
    pub fn predict(&self, window: &Tensor) -> Result<[f64; 3]> {
        let x = self.input(window)?;
        Ok(predict(self, &[&x])?[0])
    }
}

impl DownstreamModel for EmotionModel {
    type Input = EmotionInput;
    type Aux = ();

    fn store(&self) -> &ParamStore {
        self.glass.store()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.glass.store_mut()
    }

    fn trainable(&self) -> Vec<ParamId> {
        let mut ids = self.head_ids.clone();
        if self.joint {
            ids.extend(self.glass.encoder_params());
            ids.sort();
        }
        ids
    }

    fn forward_batch(
        &self,
        g: &mut Graph<'_>,
        inputs: &[&EmotionInput],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<Var>, Option<()>)> {
        let mut outs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let chunks = if self.joint {
                let enc = self.glass.encode_graph(g, &x.window)?;
                chunk_features_graph(g, enc, &self.chunk)?
            } else {
                g.constant(x.chunks.clone())
            };
            outs.push(self.head.forward(g, chunks, rng.as_deref_mut())?);
        }
        Ok((outs, None))
    }
}

pub struct FinetuneOutcome {
    pub model: EmotionModel,
    pub result: DownstreamResult,
    pub losses: Vec<f64>,
    /// Held-out dataset positions with their evaluation outputs.
    pub test: Vec<(usize, [f64; 3])>,
}

/// Fits an emotion head on the `task` samples of `dataset` with an 80/20
/// sample split drawn from `split_seed`, and evaluates on the held-out part.
pub fn run_finetune(
    encoder: &Glass,
    dataset: &[LabeledWindow],
    cfg: &FinetuneConfig,
    split_seed: u64,
) -> Result<FinetuneOutcome> {
    cfg.train.validate()?;
    let mc = encoder.config();
    let positions = task_samples(&dataset.iter().map(|s| s.label).collect::<Vec<_>>(), cfg.task);
    if positions.is_empty() {
        return config_err(format!("no {} samples in the dataset", cfg.task));
    }
    check_frames(dataset, mc.input_frames)?;
    let chunk_cfg = ChunkConfig::new(cfg.chunk_seconds, cfg.fps, mc.patch)?;
    let mut model = EmotionModel::new(encoder, &cfg.head, cfg.task, chunk_cfg, cfg.joint, split_seed)?;

    let labels: Vec<Label> = positions.iter().map(|&i| dataset[i].label).collect();
    let inputs = positions
        .iter()
        .map(|&i| model.input(&dataset[i].window.input))
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split_indices(labels.len(), cfg.train.test_fraction, split_seed)?;
    let train = prepare_training(&labels, &train, cfg.task, &cfg.train, split_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    rng.set_stream(3);
    let losses = train_downstream(&mut model, &inputs, &labels, &train, &cfg.train, &mut rng)?;

    let test_inputs: Vec<EmotionInput> = if cfg.joint {
        test.iter()
            .map(|&i| model.input(&inputs[i].window))
            .collect::<Result<_>>()?
    } else {
        test.iter().map(|&i| inputs[i].clone()).collect()
    };
    let outputs = predict(&model, &test_inputs.iter().collect::<Vec<_>>())?;
    let test_labels: Vec<&Label> = test.iter().map(|&i| &labels[i]).collect();
    let (mae, pearson_r, macro_f1) = score(cfg.task, &outputs, &test_labels)?;
    let result = DownstreamResult {
        seed: split_seed,
        task: cfg.task,
        head: cfg.head.kind.name().to_string(),
        chunk_seconds: Some(cfg.chunk_seconds),
        input_seconds: mc.input_frames as f64 / cfg.fps,
        mae,
        pearson_r,
        macro_f1,
    };
    Ok(FinetuneOutcome {
        model,
        result,
        losses,
        test: test.iter().map(|&i| positions[i]).zip(outputs).collect(),
    })
}

fn check_frames(dataset: &[LabeledWindow], frames: usize) -> Result<()> {
    if let Some(s) = dataset.iter().find(|s| s.window.input.rows() != frames) {
        return config_err(format!(
            "window of {} frames does not match the encoder input of {frames}",
            s.window.input.rows()
        ));
    }
    Ok(())
}
