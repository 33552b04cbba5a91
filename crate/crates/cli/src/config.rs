//! TOML run configuration. Every section and key is optional; unknown keys
//! are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use glass::baselines::{BaselineConfig, BaselineKind, CnnConfig};
use glass::data::{ColumnMap, SynthConfig, WindowSpec, DEFAULT_FPS};
use glass::emotion::{DownstreamConfig, FinetuneConfig, HeadConfig, Task};
use glass::model::{GlassConfig, ModelSize};
use glass::pretrain::PretrainConfig;
use glass::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneSection,
    pub baseline: BaselineSection,
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Manifest of OpenFace CSVs, relative to the working directory. When
    /// absent the corpus is synthesized from `[synth]`.
    pub manifest: Option<PathBuf>,
    pub fps: f64,
    pub min_confidence: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            manifest: None,
            fps: DEFAULT_FPS,
            min_confidence: ColumnMap::default().min_confidence,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub train_subjects: usize,
    pub val_subjects: usize,
    pub corpus_seed: u64,
    pub generator: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            train_subjects: 16,
            val_subjects: 3,
            corpus_seed: 0,
            generator: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub size: ModelSize,
    pub input_seconds: f64,
    pub output_seconds: f64,
    pub stride_frames: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            size: ModelSize::Small,
            input_seconds: 5.0,
            output_seconds: 5.0,
            stride_frames: WindowSpec::default().stride,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub task: Task,
    pub head: HeadConfig,
    pub chunk_seconds: f64,
    pub joint: bool,
    pub input_seconds: f64,
    pub stride_seconds: f64,
    /// One 80/20 split per seed.
    pub seeds: Vec<u64>,
    pub train: DownstreamConfig,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        Self {
            task: Task::Vad,
            head: HeadConfig::default(),
            chunk_seconds: 1.0,
            joint: false,
            input_seconds: 5.0,
            stride_seconds: 3.0,
            seeds: (0..5).collect(),
            train: DownstreamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub kinds: Vec<BaselineKind>,
    pub hidden: usize,
    pub dropout: f64,
    pub cnn: CnnConfig,
}

impl Default for BaselineSection {
    fn default() -> Self {
        let b = BaselineConfig::default();
        Self {
            kinds: BaselineKind::ALL.to_vec(),
            hidden: b.hidden,
            dropout: b.dropout,
            cnn: b.cnn,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ModelSize,
    InputSeconds,
    OutputSeconds,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::ModelSize => "model_size",
            Self::InputSeconds => "input_seconds",
            Self::OutputSeconds => "output_seconds",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "model_size" => Ok(Self::ModelSize),
            "input_seconds" => Ok(Self::InputSeconds),
            "output_seconds" => Ok(Self::OutputSeconds),
            _ => Err(Error::Config(format!(
                "unknown sweep axis `{s}` (expected model_size, input_seconds or output_seconds)"
            ))),
        }
    }

    pub fn default_values(self) -> Vec<String> {
        match self {
            Self::ModelSize => ModelSize::ALL.iter().map(|m| m.name().to_string()).collect(),
            Self::InputSeconds | Self::OutputSeconds => ["2", "5", "10"].map(String::from).to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Values of the swept axis; empty selects the axis defaults.
    pub values: Vec<String>,
}

/// Sections that determine a pretraining run, hashed into its identity.
#[derive(Serialize)]
struct PretrainIdentity<'a> {
    seed: u64,
    data: &'a DataSection,
    synth: &'a SynthSection,
    model: &'a ModelSection,
    pretrain: &'a PretrainConfig,
}

#[derive(Serialize)]
struct BaselineIdentity<'a> {
    seed: u64,
    data: &'a DataSection,
    synth: &'a SynthSection,
    finetune: &'a FinetuneSection,
    baseline: &'a BaselineSection,
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Config(format!("cannot serialize configuration: {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&fs::read_to_string(p)?),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.data.fps > 0.0 && self.data.fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.data.fps)));
        }
        self.synth.generator.validate()?;
        if self.data.manifest.is_none() && self.synth.generator.fps != self.data.fps {
            return Err(Error::Config(format!(
                "synth.generator.fps ({}) differs from data.fps ({})",
                self.synth.generator.fps, self.data.fps
            )));
        }
        self.pretrain.validate()?;
        self.finetune.head.validate()?;
        self.finetune.train.validate()?;
        self.baseline.cnn.validate()?;
        if self.finetune.seeds.is_empty() {
            return Err(Error::Config("finetune.seeds is empty".into()));
        }
        if !(self.finetune.stride_seconds > 0.0) {
            return Err(Error::Config("finetune.stride_seconds must be positive".into()));
        }
        self.glass_config()?.validate()?;
        self.window_spec()?.validate()
    }

    pub fn resolved(&self) -> Result<String> {
        to_toml(self)
    }

    pub fn pretrain_hash(&self) -> Result<String> {
        Ok(short_hash(&to_toml(&PretrainIdentity {
            seed: self.seed,
            data: &self.data,
            synth: &self.synth,
            model: &self.model,
            pretrain: &self.pretrain,
        })?))
    }

    pub fn baseline_hash(&self) -> Result<String> {
        Ok(short_hash(&to_toml(&BaselineIdentity {
            seed: self.seed,
            data: &self.data,
            synth: &self.synth,
            finetune: &self.finetune,
            baseline: &self.baseline,
        })?))
    }

    pub fn frames(&self, seconds: f64) -> usize {
        (seconds * self.data.fps).round() as usize
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        let spec = WindowSpec {
            input_frames: self.frames(self.model.input_seconds),
            output_frames: self.frames(self.model.output_seconds),
            stride: self.model.stride_frames,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn glass_config(&self) -> Result<GlassConfig> {
        let spec = self.window_spec()?;
        let cfg = GlassConfig::new(self.model.size).with_frames(spec.input_frames, spec.output_frames);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn columns(&self) -> ColumnMap {
        ColumnMap {
            min_confidence: self.data.min_confidence,
            ..ColumnMap::default()
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        let f = &self.finetune;
        FinetuneConfig {
            head: f.head.clone(),
            chunk_seconds: f.chunk_seconds,
            fps: self.data.fps,
            task: f.task,
            joint: f.joint,
            train: f.train.clone(),
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            task: self.finetune.task,
            hidden: self.baseline.hidden,
            dropout: self.baseline.dropout,
            cnn: self.baseline.cnn.clone(),
            fps: self.data.fps,
            train: self.finetune.train.clone(),
        }
    }

    /// Copy with one sweep value applied.
    pub fn with_axis(&self, axis: SweepAxis, value: &str) -> Result<Self> {
        let mut cfg = self.clone();
        match axis {
            SweepAxis::ModelSize => cfg.model.size = value.parse()?,
            SweepAxis::InputSeconds | SweepAxis::OutputSeconds => {
                let v: f64 = value
                    .parse()
                    .map_err(|_| Error::Config(format!("{} value `{value}` is not a number", axis.name())))?;
                if ![2.0, 5.0, 10.0].contains(&v) {
                    return Err(Error::Config(format!(
                        "{} must be one of 2, 5, 10; got {v}",
                        axis.name()
                    )));
                }
                if axis == SweepAxis::InputSeconds {
                    cfg.model.input_seconds = v;
                } else {
                    cfg.model.output_seconds = v;
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
