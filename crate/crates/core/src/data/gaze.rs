use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};
use crate::tensor::Tensor;

/// Gaze components per frame: left eye XYZ, right eye XYZ.
pub const GAZE_DIMS: usize = 6;
pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeFrame {
    pub index: usize,
    pub t: f64,
    pub gaze: [f64; GAZE_DIMS],
    pub valid: bool,
    /// Auxiliary facial activations (blink, eyebrows) when available.
    pub face_aux: Option<Vec<f64>>,
}

/// Per-dimension z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: [f64; GAZE_DIMS],
    pub std: [f64; GAZE_DIMS],
    /// Dimensions whose standard deviation was clamped to [`NormStats::EPS`].
    pub clamped: [bool; GAZE_DIMS],
}

impl NormStats {
    pub const EPS: f64 = 1e-8;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSequence {
    pub fps: f64,
    pub frames: Vec<GazeFrame>,
    pub subject_id: String,
    pub norm_stats: Option<NormStats>,
}

impl GazeSequence {
    /// Builds a sequence from raw samples, numbering frames from 0.
    pub fn from_samples(
        subject_id: impl Into<String>,
        fps: f64,
        samples: impl IntoIterator<Item = ([f64; GAZE_DIMS], bool, Option<Vec<f64>>)>,
    ) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return config_err(format!("fps must be positive, got {fps}"));
        }
        let frames = samples
            .into_iter()
            .enumerate()
            .map(|(index, (gaze, valid, face_aux))| GazeFrame {
                index,
                t: index as f64 / fps,
                gaze,
                valid,
                face_aux,
            })
            .collect();
        Ok(Self {
            fps,
            frames,
            subject_id: subject_id.into(),
            norm_stats: None,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn all_valid(&self, start: usize, end: usize) -> bool {
        self.frames[start..end].iter().all(|f| f.valid)
    }

    /// Gaze of frames `start..end` as a `(end − start) × 6` matrix.
    pub fn gaze_matrix(&self, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.frames.len() {
            return shape_err(format!(
                "frames {start}..{end} out of range for {} frames",
                self.frames.len()
            ));
        }
        let data = self.frames[start..end].iter().flat_map(|f| f.gaze).collect();
        Tensor::matrix(end - start, GAZE_DIMS, data)
    }

    /// Auxiliary facial features of frames `start..end`, if every frame has
    /// them with a consistent width.
    pub fn aux_matrix(&self, start: usize, end: usize) -> Option<Tensor> {
        let frames = self.frames.get(start..end)?;
        let width = frames.first()?.face_aux.as_ref()?.len();
        let mut data = Vec::with_capacity(frames.len() * width);
        for f in frames {
            let a = f.face_aux.as_ref()?;
            if a.len() != width {
                return None;
            }
            data.extend_from_slice(a);
        }
        Tensor::matrix(frames.len(), width, data).ok()
    }
}

/// Window geometry for self-supervised forecasting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub input_frames: usize,
    pub output_frames: usize,
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            input_frames: 150,
            output_frames: 150,
            stride: 151,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_frames == 0 || self.output_frames == 0 || self.stride == 0 {
            return config_err(format!("window spec fields must be positive: {self:?}"));
        }
        Ok(())
    }

    pub fn span(&self) -> usize {
        self.input_frames + self.output_frames
    }
}

/// A model input, with the forecasting target when one exists.
#[derive(Clone, Debug, PartialEq)]
pub struct GazeWindow {
    /// `T_i × 6`.
    pub input: Tensor,
    /// `T_o × 6`.
    pub target: Option<Tensor>,
    /// Facial activations aligned with `input`.
    pub aux: Option<Tensor>,
    pub subject_id: String,
    pub start_frame: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VadLabel {
    pub valence: f64,
    pub arousal: f64,
    pub dominance: f64,
}

impl VadLabel {
    pub fn new(valence: f64, arousal: f64, dominance: f64) -> Result<Self> {
        let l = Self {
            valence,
            arousal,
            dominance,
        };
        if l.to_array().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return config_err(format!("VAD components must lie in [0, 1]: {l:?}"));
        }
        Ok(l)
    }

    pub fn from_array(v: [f64; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.valence, self.arousal, self.dominance]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Laugh,
    Sigh,
    Cry,
}

impl Behavior {
    pub const ALL: [Behavior; 3] = [Behavior::Laugh, Behavior::Sigh, Behavior::Cry];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Behavior::Laugh => "laugh",
            Behavior::Sigh => "sigh",
            Behavior::Cry => "cry",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Behavior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown behavior `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Label {
    Vad(VadLabel),
    Behavior(Behavior),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub window: GazeWindow,
    pub label: Label,
}
