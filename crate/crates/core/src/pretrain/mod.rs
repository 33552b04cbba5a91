//! Self-supervised pretraining: joint Huber loss, scheduled sampling,
//! AdamW with warmup and cosine decay, autoregressive validation.

mod loss;
mod optim;
mod schedule;
mod train;

pub use loss::{huber, joint_loss, joint_loss_graph, kink_signature, loss_terms, LossConfig};
pub use optim::{clip_grad_norm, AdamW};
pub use schedule::{lr_at, tf_probability, OptimConfig, SamplingSchedule};
pub use train::{
    accumulate_batch, baseline_correlation, evaluate_forecast, gaze_correlation, prepare_windows, run_pretraining,
    LogRow, PretrainConfig, PretrainData, PretrainOutcome, TrainLog,
};
