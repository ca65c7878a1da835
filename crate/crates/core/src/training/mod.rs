//! The optimization loop and everything it consumes: configuration, seeds,
//! schedules, shuffling, the simulated low-level noise source and the
//! optimizers.

mod config;
mod noise;
mod optimizer;
mod record;
mod run;
mod schedule;
mod seeds;
mod shuffle;

pub use config::{OptimizerKind, Schedule, TrainConfig};
pub use noise::{lowlevel_noise_hook, noise_factors, DEFAULT_NOISE_REL};
pub use optimizer::{clip_global_norm, optimizer_step, OptimizerState};
pub use record::{EpochMetrics, Onset, PredictionMatrix, RunInput, RunRecord, Snapshot};
pub use run::{config_digest, run_id, train_run};
pub use schedule::lr_at;
pub use seeds::{NoiseSeed, SeedVector, SourceId, BITFLIP_TAG};
pub use shuffle::epoch_shuffle;
