//! Downstream stage: chunked derivative features of the pretrained encoder
//! feed an emotion head for VAD regression or behavior classification.

mod downstream;
mod features;
mod finetune;
mod heads;
mod metrics;

pub use downstream::{
    predict, prepare_training, score, split_indices, task_samples, train_downstream, write_downstream_csv,
    DownstreamConfig, DownstreamModel, DownstreamResult, DOWNSTREAM_HEADER,
};
pub use features::{chunk, chunk_features_graph, encoder_features, ChunkConfig};
pub use finetune::{run_finetune, EmotionInput, EmotionModel, FinetuneConfig, FinetuneOutcome};
pub use heads::{EmotionHead, EmotionHeadKind, HeadConfig, Task, HEAD_OUTPUTS};
pub use metrics::{macro_f1, summarize, vad_metrics, Summary, VadMetrics};
