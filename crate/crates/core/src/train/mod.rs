//! Momentum SGD with weight decay, the step learning-rate schedule, the
//! training loop and checkpoints.

mod checkpoint;
mod config;
mod dataset;
mod sgd;
mod trainer;

pub use checkpoint::{Checkpoint, ParamBlock, RngState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{iterations_per_epoch, lr_at, TrainConfig, UpdateRule};
pub use dataset::Dataset;
pub use sgd::{sgd_step, sgd_update, SgdStep};
pub use trainer::{
    evaluate, smoothed_loss_increases, Evaluation, FitOptions, IterationHook, MetricRow, TrainReport, Trainer,
    BEST_CHECKPOINT, FINAL_CHECKPOINT, METRIC_HEADER, METRIC_LOG, MODEL_MANIFEST,
};
