//! Loss, optimizer and the training loop.

mod adam;
mod loss;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use loss::{loss, LossConfig};
pub use trainer::{
    batch_gradient, chronological_split, mae_original, train, EpochRecord, Split, SplitRatios,
    TrainConfig, TrainOutcome,
};
