//! A deterministic training lab for measuring how much trained neural
//! networks vary from run to run, which randomness sources cause it, and how
//! much cheap ensembling and test-time augmentation reduce it.

pub mod data;
pub mod emit;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod mitigation;
pub mod models;
pub mod numerics;
pub mod perturbation;
pub mod plot;
pub mod protocol;
pub mod store;
pub mod training;

pub use error::{Error, Result};
pub use experiment::ExperimentFile;
pub use metrics::MetricsReport;
pub use models::{Architecture, ModelSpec, Params};
pub use numerics::{RngStream, Tensor};
pub use protocol::{Condition, ExperimentPlan, Varied};
pub use store::RunStore;
pub use training::{PredictionMatrix, RunInput, RunRecord, SeedVector, SourceId, TrainConfig};
