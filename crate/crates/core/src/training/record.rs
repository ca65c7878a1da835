use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ActivationCapture, ModelSpec, Params};
use crate::numerics::{softmax, Tensor};
use crate::perturbation::BitFlipDescriptor;

use super::{SeedVector, TrainConfig};

/// `examples × classes` logits of one model on a fixed test set.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    logits: Tensor,
}

impl PredictionMatrix {
    pub fn new(logits: Tensor) -> Result<Self> {
        if logits.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "prediction_matrix",
                left: logits.shape().to_vec(),
                right: vec![],
            });
        }
        Ok(Self { logits })
    }

    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn rows(&self) -> usize {
        self.logits.shape()[0]
    }

    pub fn cols(&self) -> usize {
        self.logits.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.logits.row(i)
    }

    /// Softmax probabilities, row-major, in binary64.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.rows()).flat_map(|i| softmax(self.row(i))).collect()
    }

    pub fn bitwise_eq(&self, other: &PredictionMatrix) -> bool {
        self.logits.bitwise_eq(&other.logits)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// Percent.
    pub test_accuracy: f64,
    /// Nats.
    pub test_cross_entropy: f64,
}

/// Epoch at which the run switches from `baseline` to its own seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Onset {
    pub epoch: usize,
    pub baseline: SeedVector,
}

/// The per-run inputs that vary within a condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInput {
    pub seeds: SeedVector,
    pub onset: Option<Onset>,
    /// Seed of the stream that picks the one-ULP change, if any.
    pub bitflip_seed: Option<u64>,
}

impl RunInput {
    pub fn plain(seeds: SeedVector) -> Self {
        Self {
            seeds,
            onset: None,
            bitflip_seed: None,
        }
    }

    /// Seeds in effect during `epoch`.
    pub fn seeds_at(&self, epoch: usize) -> &SeedVector {
        match &self.onset {
            Some(o) if epoch < o.epoch => &o.baseline,
            _ => &self.seeds,
        }
    }
}

/// Parameters and test predictions at the end of one cyclic segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub params: Params,
    pub predictions: PredictionMatrix,
}

/// Complete outcome of one training run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub run_id: String,
    pub config_digest: String,
    pub dataset: String,
    pub dataset_fingerprint: String,
    pub model: ModelSpec,
    pub config: TrainConfig,
    pub input: RunInput,
    pub bitflip: Option<BitFlipDescriptor>,
    pub history: Vec<EpochMetrics>,
    pub predictions: PredictionMatrix,
    pub snapshots: Vec<Snapshot>,
    pub activations: ActivationCapture,
    pub params: Params,
    pub params_digest: String,
}
