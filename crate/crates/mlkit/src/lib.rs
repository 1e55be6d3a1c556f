//! Model side of the pipeline: window preparation, patient split,
//! resampling, clustering, boosted trees, thresholds and metrics.

pub mod features;
pub mod gbt;
pub mod kmeans;
pub mod metrics;
pub mod pipeline;
pub mod prepare;
pub mod resample;
pub mod split;

pub use features::{FeatureLayout, WindowInput};
pub use pipeline::{train_pipeline, PipelineModel, PipelineParams, Prediction};
