//! Optimisation, checkpoints and ensembles.

mod adam;
mod checkpoint;
mod config;
mod ensemble;
mod setup;
mod trainer;

pub use adam::{adam_step, global_norm, OptimizerState};
pub use checkpoint::{Checkpoint, Progress, FORMAT_VERSION, MAGIC};
pub use config::{Hyper, TrainConfig};
pub use ensemble::{mean_distribution, Ensemble};
pub use setup::build_model;
pub use trainer::{
    batch_loss_and_gradients, prepare_training_set, span_loss, train, train_step, Control,
    EpochHook, EpochRecord, StepStats, TrainOptions, TrainOutcome,
};
