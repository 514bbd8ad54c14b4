//! Objectives, exact gradients, sequence handling, and the optimizer.

mod backprop;
mod batch;
mod lbfgs;
mod loss;
mod trainer;

pub use backprop::{batch_loss, gradient};
pub use batch::{chop_sequences, Sequence, TrainingBatch};
pub use lbfgs::{strong_wolfe_search, LbfgsHistory, LineSearchResult, WOLFE_C1, WOLFE_C2};
pub use loss::{loss_discriminative, loss_mse, LossConfig};
pub use trainer::{
    train, write_log_csv, IterationRecord, OptimizerConfig, TrainOutcome, EARLY_STOP_PATIENCE,
};
