//! Statistical-feature predictors and a temporal CNN over raw gaze.

mod features;
mod fit;
mod models;

pub use features::{stat_feature_len, stat_features, stat_features_matrix};
pub use fit::{fit_baseline, BaselineConfig, BaselineKind, BaselineOutcome};
pub use models::{BatchMoments, CnnConfig, StatsMlp, TemporalCnn};
