//! Gaze sequences, file formats, windowing and normalization.

mod annotations;
mod gaze;
mod manifest;
mod norm;
mod openface;
mod synth;
mod upsample;
mod windows;

pub use annotations::{parse_annotations, write_annotations, Annotation};
pub use gaze::{
    Behavior, GazeFrame, GazeSequence, GazeWindow, Label, LabeledWindow, NormStats, VadLabel, WindowSpec, DEFAULT_FPS,
    GAZE_DIMS,
};
pub use manifest::{load_manifest, parse_manifest, write_manifest, ManifestEntry, Recording, Split};
pub use norm::{compute_norm_stats, denormalize, normalize};
pub use openface::{parse_openface_csv, write_openface_csv, ColumnMap, FACE_COLUMNS, GAZE_COLUMNS};
pub use synth::{regime_table, synth_corpus, synth_gaze, Regime, SynthConfig, SynthRecording};
pub use upsample::{label_mean, tail_indices, upsample_tail, Upsampled};
pub use windows::{extract_windows, label_windows, preceding_window};
