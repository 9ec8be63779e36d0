//! Two-stage retrieval→ranking simulation: a synthetic page-view generator
//! with day-indexed interest drift, a small two-tower + ranker model with
//! hand-written backprop, and a streaming train/evaluate loop that compares
//! listwise top-k training against a pointwise baseline.

pub mod data;
pub mod model;
pub mod train;

pub use data::{Generator, PVRecord};
pub use model::{CascadeModel, Dims};
pub use train::{
    streaming_evaluate, streaming_run, DayMetrics, LossKind, StepStats, TrainConfig, Trainer,
    DAY_METRICS_CSV_HEADER,
};
