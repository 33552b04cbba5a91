//! The GLASS forecaster, its checkpoint format and the predict-previous
//! baseline.

mod checkpoint;
mod config;
mod glass;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION};
pub use config::{GlassConfig, ModelSize};
pub use glass::{patchify, predict_previous, unpatchify, Glass};
