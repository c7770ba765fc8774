//! Adam, the hold-then-decay learning-rate schedule and the epoch loop.

mod adam;
mod config;
mod history;
mod samples;
mod trainer;

pub use adam::adam_step;
pub use config::{lr_at, lr_schedule, DecayGranularity, StoppingRule, TrainConfig};
pub use history::{EpochRecord, TrainHistory};
pub use samples::{batch_plan, steps_per_epoch, InMemoryDataset, Samples};
pub use trainer::{evaluate, predict_probs, train, Evaluation, TrainOutcome};
