//! Data generation, the one-step training loop, the per-term regression
//! variant, and learning-error diagnostics.

mod alt;
mod config;
mod dataset;
mod diagnostics;
mod train;

pub use alt::{
    alt_extract_targets, alt_steps, alt_targets_from_data, alt_train, fit_regression, generate_alt_samples, log_spaced,
    regression_loss, AltSample, AltTargets, MAX_CONDITION,
};
pub use config::{TrainConfig, PRESETS};
pub use dataset::{generate_dataset, read_dataset, split_dataset, write_dataset, Dataset, DatasetHeader, DatasetRecord};
pub use diagnostics::learning_error_delta;
pub use train::{train, train_with, EpochLoss, LossReport};
