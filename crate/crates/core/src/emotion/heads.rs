use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{config_err, Error, Result};
use crate::nn::{dropout, Conv1d, EncoderBlock, Gru, LayerNorm, Linear};
use crate::params::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionHeadKind {
    /// Time-averaged MLP.
    Mlp,
    Tcn,
    Gru,
    Transformer,
}

impl EmotionHeadKind {
    pub const ALL: [Self; 4] = [Self::Mlp, Self::Tcn, Self::Gru, Self::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mlp => "mlp",
            Self::Tcn => "tcn",
            Self::Gru => "gru",
            Self::Transformer => "transformer",
        }
    }
}

impl fmt::Display for EmotionHeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmotionHeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown head kind `{s}`")))
    }
}

/// Downstream task: VAD regression or three-way behavior classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Vad,
    Behavior,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Self::Vad => "vad",
            Self::Behavior => "behavior",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vad" => Ok(Self::Vad),
            "behavior" => Ok(Self::Behavior),
            _ => config_err(format!("unknown task `{s}`")),
        }
    }
}

/// Both tasks produce three outputs: V, A, D or laugh, sigh, cry logits.
pub const HEAD_OUTPUTS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub kind: EmotionHeadKind,
    pub hidden: usize,
    pub dropout: f64,
    pub tcn_kernel: usize,
    /// One convolution per dilation.
    pub tcn_dilations: Vec<usize>,
    pub transformer_blocks: usize,
    pub transformer_heads: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            kind: EmotionHeadKind::Gru,
            hidden: 64,
            dropout: 0.1,
            tcn_kernel: 3,
            tcn_dilations: vec![1, 2, 4],
            transformer_blocks: 2,
            transformer_heads: 4,
        }
    }
}

impl HeadConfig {
    pub fn with_kind(kind: EmotionHeadKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return config_err("head hidden width must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return config_err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.kind == EmotionHeadKind::Tcn {
            if self.tcn_kernel == 0 || self.tcn_kernel.is_multiple_of(2) {
                return config_err(format!("TCN kernel {} must be odd", self.tcn_kernel));
            }
            if self.tcn_dilations.is_empty() || self.tcn_dilations.contains(&0) {
                return config_err("TCN dilations must be nonempty and positive");
            }
        }
        if self.kind == EmotionHeadKind::Transformer {
            let h = self.transformer_heads;
            if h == 0 || !self.hidden.is_multiple_of(h) || !(self.hidden / h).is_multiple_of(2) {
                return config_err(format!(
                    "{} transformer heads do not split width {} into even parts",
                    h, self.hidden
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Body {
    Mlp(Linear),
    Tcn(Vec<Conv1d>),
    Gru(Gru),
    Transformer {
        proj: Linear,
        blocks: Vec<EncoderBlock>,
        norm: LayerNorm,
    },
}

/// Head mapping a chunk sequence (`chunks × width`) to three outputs.
/// Parameters live in a caller-provided store under `prefix`.
#[derive(Clone, Debug)]
pub struct EmotionHead {
    cfg: HeadConfig,
    task: Task,
    body: Body,
    out: Linear,
}

impl EmotionHead {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        cfg: &HeadConfig,
        task: Task,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden;
        let body = match cfg.kind {
            EmotionHeadKind::Mlp => Body::Mlp(Linear::new(store, &format!("{prefix}.hidden"), input, h, rng)),
            EmotionHeadKind::Tcn => Body::Tcn(
                cfg.tcn_dilations
                    .iter()
                    .enumerate()
                    .map(|(i, &dil)| {
                        let fan_in = if i == 0 { input } else { h };
                        let pad = dil * (cfg.tcn_kernel - 1) / 2;
                        Conv1d::new(
                            store,
                            &format!("{prefix}.conv{i}"),
                            fan_in,
                            h,
                            cfg.tcn_kernel,
                            dil,
                            pad,
                            rng,
                        )
                    })
                    .collect(),
            ),
            EmotionHeadKind::Gru => Body::Gru(Gru::new(store, &format!("{prefix}.gru"), input, h, rng)),
            EmotionHeadKind::Transformer => Body::Transformer {
                proj: Linear::new(store, &format!("{prefix}.proj"), input, h, rng),
                blocks: (0..cfg.transformer_blocks)
                    .map(|i| EncoderBlock::new(store, &format!("{prefix}.block{i}"), h, cfg.transformer_heads, rng))
                    .collect::<Result<_>>()?,
                norm: LayerNorm::new(store, &format!("{prefix}.norm"), h),
            },
        };
        let out = Linear::new(store, &format!("{prefix}.out"), h, HEAD_OUTPUTS, rng);
        Ok(Self {
            cfg: cfg.clone(),
            task,
            body,
            out,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.cfg
    }

    pub fn task(&self) -> Task {
        self.task
    }

    /// `1 × 3` output: VAD in `[0, 1]` through a logistic map, or behavior
    /// logits. Passing an rng enables dropout (training mode).
    pub fn forward(&self, g: &mut Graph<'_>, chunks: Var, rng: Option<&mut impl Rng>) -> Result<Var> {
        let pooled = match &self.body {
            Body::Mlp(hidden) => {
                let m = g.mean_rows(chunks);
                let h = hidden.forward(g, m)?;
                g.gelu(h)
            }
            Body::Tcn(convs) => {
                let mut h = chunks;
                for (i, conv) in convs.iter().enumerate() {
                    let c = conv.forward(g, h)?;
                    let c = g.relu(c);
                    h = if i == 0 { c } else { g.add(h, c)? };
                }
                g.mean_rows(h)
            }
            Body::Gru(gru) => gru.forward(g, chunks)?,
            Body::Transformer { proj, blocks, norm } => {
                let mut h = proj.forward(g, chunks)?;
                let positions: Vec<usize> = (0..g.value(h).rows()).collect();
                for b in blocks {
                    h = b.forward(g, h, &positions)?;
                }
                let h = norm.forward(g, h)?;
                g.mean_rows(h)
            }
        };
        let pooled = dropout(g, pooled, self.cfg.dropout, rng)?;
        let y = self.out.forward(g, pooled)?;
        Ok(match self.task {
            Task::Vad => g.sigmoid(y),
            Task::Behavior => y,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(head: &EmotionHead, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut g = Graph::with_params(store);
        let v = g.constant(x.clone());
        let y = head.forward(&mut g, v, None::<&mut ChaCha8Rng>).unwrap();
        g.value(y).clone()
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-3.0..3.0)).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    #[test]
    fn every_kind_emits_three_outputs() {
        let x = random(5, 12, 1);
        for task in [Task::Vad, Task::Behavior] {
            for kind in EmotionHeadKind::ALL {
                let mut store = ParamStore::new();
                let mut rng = ChaCha8Rng::seed_from_u64(2);
                let head =
                    EmotionHead::new(&mut store, "head", 12, &HeadConfig::with_kind(kind), task, &mut rng).unwrap();
                let y = run(&head, &store, &x);
                assert_eq!(y.dims(), &[1, 3], "{kind}");
                if task == Task::Vad {
                    assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
                }
                assert_eq!(y, run(&head, &store, &x), "evaluation is deterministic");
            }
        }
    }

    #[test]
    fn mlp_ignores_chunk_order() {
        // dyadic values keep the pooled sums exact in any order
        let x = random(4, 6, 3).map(|v| (v * 16.0).round() / 16.0);
        let rows: Vec<&[f64]> = (0..4).rev().map(|i| x.row(i)).collect();
        let reversed = Tensor::from_rows(&rows).unwrap();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = EmotionHead::new(
            &mut store,
            "h",
            6,
            &HeadConfig::with_kind(EmotionHeadKind::Mlp),
            Task::Vad,
            &mut rng,
        )
        .unwrap();
        assert_eq!(run(&head, &store, &x), run(&head, &store, &reversed));
    }

    #[test]
    fn unknown_kind_is_config_error() {
        assert!(matches!("lstm".parse::<EmotionHeadKind>(), Err(Error::Config(_))));
        assert_eq!("tcn".parse::<EmotionHeadKind>().unwrap(), EmotionHeadKind::Tcn);
    }
}
