use serde::{Deserialize, Serialize};

use crate::data::AugmentationSpec;
use crate::error::{Error, Result};

use super::DEFAULT_NOISE_REL;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Cosine,
    /// Cosine restarted in `cycles` equal segments.
    Cyclic {
        cycles: usize,
    },
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f32, beta2: f32, epsilon: f32 },
}

/// Everything about a training run except the seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub max_lr: f32,
    pub warmup_epochs: usize,
    pub schedule: Schedule,
    pub momentum: f32,
    pub weight_decay: f32,
    pub optimizer: OptimizerKind,
    pub grad_clip_norm: Option<f32>,
    /// Relative scale of the simulated low-level kernel noise when enabled.
    pub lowlevel_noise_rel: f32,
    /// Apply the noise hook in the backward pass as well as the forward pass.
    pub noise_in_backward: bool,
    pub augmentation: AugmentationSpec,
    pub capture_activations: bool,
}

impl Default for TrainConfig {
    /// The desk-scale configuration.
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            max_lr: 0.1,
            warmup_epochs: 2,
            schedule: Schedule::Cosine,
            momentum: 0.9,
            weight_decay: 5e-4,
            optimizer: OptimizerKind::Sgd,
            grad_clip_norm: None,
            lowlevel_noise_rel: DEFAULT_NOISE_REL,
            noise_in_backward: true,
            augmentation: AugmentationSpec::NONE,
            capture_activations: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batch_size == 0 {
            return fail("epochs and batch_size must be ≥ 1".into());
        }
        if self.warmup_epochs >= self.epochs {
            return fail(format!(
                "warmup_epochs {} must be < epochs {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if let Schedule::Cyclic { cycles } = self.schedule {
            if cycles == 0 || !self.epochs.is_multiple_of(cycles) {
                return fail(format!("{cycles} cycles must evenly divide {} epochs", self.epochs));
            }
            if self.warmup_epochs >= self.epochs / cycles {
                return fail("warmup must end inside the first cycle".into());
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum {} not in [0, 1)", self.momentum));
        }
        if self.lowlevel_noise_rel.is_nan() || self.lowlevel_noise_rel < 0.0 {
            return fail("lowlevel_noise_rel must be ≥ 0".into());
        }
        if !(self.max_lr.is_finite() && self.max_lr >= 0.0 && self.weight_decay >= 0.0) {
            return fail("max_lr and weight_decay must be finite and ≥ 0".into());
        }
        if let Some(c) = self.grad_clip_norm {
            if c.is_nan() || c <= 0.0 {
                return fail("grad_clip_norm must be > 0".into());
            }
        }
        if let OptimizerKind::Adam { beta1, beta2, epsilon } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon.is_nan() || epsilon <= 0.0 {
                return fail("invalid Adam hyperparameters".into());
            }
        }
        Ok(())
    }

    pub fn cycles(&self) -> usize {
        match self.schedule {
            Schedule::Cyclic { cycles } => cycles,
            _ => 1,
        }
    }
}
