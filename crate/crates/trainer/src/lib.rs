//! Training, evaluation and comparison of the leakage-removal U-Nets, and
//! the `smsnet` command line.

pub mod adam;
pub mod cli;
pub mod compare;
pub mod config;
pub mod data;
mod error;
pub mod evaluate;
pub mod train;

pub use adam::Adam;
pub use compare::{compare, Comparison, RunOutcome};
pub use config::{Augment, TrainConfig};
pub use error::{Result, TrainError};
pub use evaluate::{evaluate, evaluate_checkpoint, Evaluation};
pub use train::{train, train_with, EpochLog, RunRecord};
