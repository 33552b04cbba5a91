use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::emotion::{DownstreamModel, Task, HEAD_OUTPUTS};
use crate::error::{config_err, shape_err, Result};
use crate::nn::{dropout, BatchNorm1d, Conv1d, Linear};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

fn squash(g: &mut Graph<'_>, y: Var, task: Task) -> Var {
    match task {
        Task::Vad => g.sigmoid(y),
        Task::Behavior => y,
    }
}

/// Two-layer MLP on a standardized feature vector.
#[derive(Clone, Debug)]
pub struct StatsMlp {
    store: ParamStore,
    hidden: Linear,
    out: Linear,
    dropout: f64,
    task: Task,
}

impl StatsMlp {
    pub fn new(features: usize, hidden: usize, dropout: f64, task: Task, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut store = ParamStore::new();
        let h = Linear::new(&mut store, "mlp.hidden", features, hidden, &mut rng);
        let out = Linear::new(&mut store, "mlp.out", hidden, HEAD_OUTPUTS, &mut rng);
        store.round_to_f32();
        Self {
            store,
            hidden: h,
            out,
            dropout,
            task,
        }
    }
}

impl DownstreamModel for StatsMlp {
    /// `1 × F` standardized features.
    type Input = Tensor;
    type Aux = ();

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn trainable(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    fn forward_batch(
        &self,
        g: &mut Graph<'_>,
        inputs: &[&Tensor],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<Var>, Option<()>)> {
        let mut outs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let x = g.constant((*x).clone());
            let h = self.hidden.forward(g, x)?;
            let h = g.relu(h);
            let h = dropout(g, h, self.dropout, rng.as_deref_mut())?;
            let y = self.out.forward(g, h)?;
            outs.push(squash(g, y, self.task));
        }
        Ok((outs, None))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub channels: usize,
    pub kernel: usize,
    /// One convolution layer per dilation.
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub hidden: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            kernel: 5,
            dilations: vec![1, 2, 4],
            dropout: 0.1,
            hidden: 64,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.kernel == 0 || self.hidden == 0 {
            return config_err("CNN channels, kernel and hidden width must be positive");
        }
        if self.dilations.is_empty() || self.dilations.contains(&0) {
            return config_err("CNN dilations must be nonempty and positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return config_err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Frames seen by one output position of the convolution stack.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations.iter().map(|d| d * (self.kernel - 1)).sum::<usize>()
    }
}

/// Running statistics of every batch-norm layer from one training batch.
pub type BatchMoments = Vec<(Vec<f64>, Vec<f64>, usize)>;

/// Valid 1-D convolutions, each followed by ReLU, batch norm and dropout;
/// global mean pooling over time; MLP head.
#[derive(Clone, Debug)]
pub struct TemporalCnn {
    cfg: CnnConfig,
    store: ParamStore,
    convs: Vec<Conv1d>,
    norms: Vec<BatchNorm1d>,
    hidden: Linear,
    out: Linear,
    task: Task,
}

impl TemporalCnn {
    pub fn new(input: usize, cfg: &CnnConfig, task: Task, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        let mut store = ParamStore::new();
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        for (i, &d) in cfg.dilations.iter().enumerate() {
            let fan_in = if i == 0 { input } else { cfg.channels };
            convs.push(Conv1d::new(
                &mut store,
                &format!("cnn.conv{i}"),
                fan_in,
                cfg.channels,
                cfg.kernel,
                d,
                0,
                &mut rng,
            ));
            norms.push(BatchNorm1d::new(&mut store, &format!("cnn.bn{i}"), cfg.channels));
        }
        let hidden = Linear::new(&mut store, "cnn.hidden", cfg.channels, cfg.hidden, &mut rng);
        let out = Linear::new(&mut store, "cnn.out", cfg.hidden, HEAD_OUTPUTS, &mut rng);
        store.round_to_f32();
        Ok(Self {
            cfg: cfg.clone(),
            store,
            convs,
            norms,
            hidden,
            out,
            task,
        })
    }

    pub fn config(&self) -> &CnnConfig {
        &self.cfg
    }

    /// Evaluation-mode output for one `T × channels` window.
    pub fn forward_eval(&self, window: &Tensor) -> Result<Tensor> {
        let mut g = Graph::with_params(&self.store);
        let (outs, _) = self.forward_batch(&mut g, &[window], None)?;
        Ok(g.value(outs[0]).clone())
    }
}

impl DownstreamModel for TemporalCnn {
    /// `T × channels` window.
    type Input = Tensor;
    type Aux = BatchMoments;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn trainable(&self) -> Vec<ParamId> {
        self.store.ids().collect()
    }

    /// Batch norm in training mode pools statistics over every (sample,
    /// time) row of the batch.
    fn forward_batch(
        &self,
        g: &mut Graph<'_>,
        inputs: &[&Tensor],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<Var>, Option<BatchMoments>)> {
        let rf = self.cfg.receptive_field();
        if let Some(x) = inputs.iter().find(|x| x.rows() < rf) {
            return shape_err(format!(
                "window {} shorter than the receptive field {rf}",
                x.shape_str()
            ));
        }
        let training = rng.is_some();
        let mut moments = Vec::new();
        let mut hs: Vec<Var> = inputs.iter().map(|x| g.constant((*x).clone())).collect();
        for (conv, bn) in self.convs.iter().zip(&self.norms) {
            let unfolded = hs
                .iter()
                .map(|&h| g.unfold(h, conv.kernel, conv.dilation, conv.pad))
                .collect::<Result<Vec<_>>>()?;
            let lens: Vec<usize> = unfolded.iter().map(|&u| g.value(u).rows()).collect();
            let stacked = g.concat_rows(&unfolded)?;
            let y = conv.proj.forward(g, stacked)?;
            let y = g.relu(y);
            let y = if training {
                let (y, m, v) = bn.forward_train(g, y)?;
                moments.push((m, v, lens.iter().sum()));
                y
            } else {
                bn.forward_eval(g, y)?
            };
            let y = dropout(g, y, self.cfg.dropout, rng.as_deref_mut())?;
            let mut start = 0;
            hs = lens
                .iter()
                .map(|&len| {
                    let part = g.slice_rows(y, start, len);
                    start += len;
                    part
                })
                .collect::<Result<_>>()?;
        }
        let mut outs = Vec::with_capacity(hs.len());
        for h in hs {
            let p = g.mean_rows(h);
            let p = self.hidden.forward(g, p)?;
            let p = g.relu(p);
            let y = self.out.forward(g, p)?;
            outs.push(squash(g, y, self.task));
        }
        Ok((outs, training.then_some(moments)))
    }

    fn observe(&mut self, moments: BatchMoments) {
        for (bn, (m, v, n)) in self.norms.iter_mut().zip(moments) {
            bn.update_running(&m, &v, n);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn window(t: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..t * 6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::matrix(t, 6, data).unwrap()
    }

    #[test]
    fn evaluation_is_deterministic_with_three_outputs() {
        for task in [Task::Vad, Task::Behavior] {
            let m = TemporalCnn::new(6, &CnnConfig::default(), task, 1).unwrap();
            let x = window(60, 2);
            let y = m.forward_eval(&x).unwrap();
            assert_eq!(y.dims(), &[1, 3]);
            assert_eq!(y, m.forward_eval(&x).unwrap());
        }
    }

    #[test]
    fn short_window_rejected() {
        let m = TemporalCnn::new(6, &CnnConfig::default(), Task::Vad, 1).unwrap();
        assert_eq!(CnnConfig::default().receptive_field(), 29);
        assert!(m.forward_eval(&window(28, 0)).is_err());
        assert!(m.forward_eval(&window(29, 0)).is_ok());
    }

    #[test]
    fn padded_shift_barely_moves_output() {
        let m = TemporalCnn::new(6, &CnnConfig::default(), Task::Vad, 3).unwrap();
        let core = window(20, 4);
        let place = |offset: usize| {
            let mut x = Tensor::full(&[120, 6], 0.25);
            for r in 0..20 {
                x.row_mut(offset + r).copy_from_slice(core.row(r));
            }
            x
        };
        let a = m.forward_eval(&place(50)).unwrap();
        let b = m.forward_eval(&place(51)).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-3);
    }
}
