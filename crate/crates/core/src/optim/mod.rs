//! Adam and the minibatch training loop.

mod adam;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{
    evaluate, for_each_chunk, hidden_activations, train, train_observed, EpochMetrics, Evaluation, Task, TrainConfig,
    TrainOutcome, TrainReport,
};
