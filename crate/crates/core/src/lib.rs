//! Self-supervised gaze forecasting with a patch-based encoder–decoder
//! Transformer, and downstream emotion and behavior heads on its encoder.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod baselines;
pub mod data;
pub mod emotion;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod model;
pub mod nn;
pub mod params;
pub mod pretrain;
pub mod report;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
