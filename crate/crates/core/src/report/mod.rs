//! Long-format metric reports, the pretraining/downstream correlation
//! analysis and SVG plots.

mod correlate;
mod metrics;
pub mod svg;

pub use correlate::{correlate_report, CorrelationReport, ScatterPoint, DOWNSTREAM_AXES};
pub use metrics::{Metric, MetricRow, MetricsReport};
