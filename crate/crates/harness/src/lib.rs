//! Experiment orchestration: rollouts, meta-fitness, the ES training loop,
//! leave-one-out evaluation, the sharing-ratio sweep, checkpoints and the
//! `hebb` command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod rollout;
pub mod sweep;
pub mod train;
pub mod verify;

pub use checkpoint::Checkpoint;
pub use config::{Baseline, EvalMode, Experiment, ExperimentConfig, ModelConfig, Rho};
pub use error::{HarnessError, Result};
pub use evaluate::{Cell, ResultsTable};
pub use rollout::{meta_fitness, rollout, RolloutSetup};
pub use sweep::run_rho_sweep;
pub use train::{train, HistoryRecord, TrainOptions, TrainOutcome};
