use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::GAZE_DIMS;
use crate::error::{config_err, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelSize {
    Small,
    Base,
    Large,
}

impl ModelSize {
    pub const ALL: [ModelSize; 3] = [ModelSize::Small, ModelSize::Base, ModelSize::Large];

    pub fn name(self) -> &'static str {
        match self {
            ModelSize::Small => "small",
            ModelSize::Base => "base",
            ModelSize::Large => "large",
        }
    }
}

impl fmt::Display for ModelSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model size `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlassConfig {
    pub input_dims: usize,
    pub input_frames: usize,
    pub output_frames: usize,
    pub patch: usize,
    pub model_dim: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub size: ModelSize,
}

impl GlassConfig {
    pub fn new(size: ModelSize) -> Self {
        let (model_dim, layers, heads) = match size {
            ModelSize::Small => (32, 2, 4),
            ModelSize::Base => (64, 4, 4),
            ModelSize::Large => (128, 6, 8),
        };
        Self {
            input_dims: GAZE_DIMS,
            input_frames: 150,
            output_frames: 150,
            patch: 15,
            model_dim,
            enc_layers: layers,
            dec_layers: layers,
            heads,
            size,
        }
    }

    pub fn small() -> Self {
        Self::new(ModelSize::Small)
    }

    pub fn with_frames(mut self, input_frames: usize, output_frames: usize) -> Self {
        self.input_frames = input_frames;
        self.output_frames = output_frames;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("input_dims", self.input_dims),
            ("input_frames", self.input_frames),
            ("output_frames", self.output_frames),
            ("patch", self.patch),
            ("model_dim", self.model_dim),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("heads", self.heads),
        ];
        for (name, v) in counts {
            if v == 0 {
                return config_err(format!("{name} must be positive"));
            }
        }
        if !self.input_frames.is_multiple_of(self.patch) || !self.output_frames.is_multiple_of(self.patch) {
            return config_err(format!(
                "patch {} must divide input {} and output {} frames",
                self.patch, self.input_frames, self.output_frames
            ));
        }
        if !self.model_dim.is_multiple_of(self.heads) || !(self.model_dim / self.heads).is_multiple_of(2) {
            return config_err(format!(
                "model dim {} must split into {} heads of even width",
                self.model_dim, self.heads
            ));
        }
        Ok(())
    }

    pub fn in_patches(&self) -> usize {
        self.input_frames / self.patch
    }

    pub fn out_patches(&self) -> usize {
        self.output_frames / self.patch
    }

    /// Flattened patch width `P·D`.
    pub fn patch_width(&self) -> usize {
        self.patch * self.input_dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for size in ModelSize::ALL {
            let cfg = GlassConfig::new(size);
            cfg.validate().unwrap();
            assert_eq!(cfg.in_patches(), 10);
            assert_eq!(cfg.patch_width(), 90);
        }
    }

    #[test]
    fn indivisible_patch_rejected() {
        let mut cfg = GlassConfig::small();
        cfg.patch = 7;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn size_names_round_trip() {
        for size in ModelSize::ALL {
            assert_eq!(size.name().parse::<ModelSize>().unwrap(), size);
        }
        assert!("huge".parse::<ModelSize>().is_err());
    }
}
