//! Model zoo with hand-written forward and backward passes.

mod network;
mod params;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use network::{ForwardPass, Mode, Model, PassStreams};
pub use params::{ActivationCapture, Params};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    LinearSoftmax,
    MlpOneHidden {
        hidden_units: usize,
    },
    ConvOneHidden {
        channels: usize,
        kernel_size: usize,
    },
    /// conv → ReLU → pool → conv → ReLU → pool → fc → ReLU → fc.
    TinyConvNet {
        channels1: usize,
        channels2: usize,
        fc_units: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_shape: [usize; 3],
    pub class_count: usize,
    #[serde(default)]
    pub dropout_rate: f32,
    #[serde(default = "one")]
    pub width_multiplier: f32,
}

fn one() -> f32 {
    1.0
}

impl ModelSpec {
    pub fn new(architecture: Architecture, input_shape: [usize; 3], class_count: usize) -> Self {
        Self {
            architecture,
            input_shape,
            class_count,
            dropout_rate: 0.0,
            width_multiplier: 1.0,
        }
    }

    pub fn with_dropout(mut self, rate: f32) -> Self {
        self.dropout_rate = rate;
        self
    }

    pub fn with_width(mut self, multiplier: f32) -> Self {
        self.width_multiplier = multiplier;
        self
    }

    /// A hidden size after width scaling: `round(w · base)`.
    pub fn scaled(&self, base: usize) -> usize {
        (self.width_multiplier as f64 * base as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} not in [0, 1)", self.dropout_rate));
        }
        if !(self.width_multiplier > 0.0 && self.width_multiplier.is_finite()) {
            return bad(format!("width multiplier {} must be > 0", self.width_multiplier));
        }
        if self.class_count < 2 || self.input_shape.contains(&0) {
            return bad("need ≥ 2 classes and a non-empty input shape".into());
        }
        match self.architecture {
            Architecture::LinearSoftmax => {}
            Architecture::MlpOneHidden { hidden_units: 0 } => return bad("hidden_units must be ≥ 1".into()),
            Architecture::ConvOneHidden { channels, kernel_size } => {
                let [_, h, w] = self.input_shape;
                if channels == 0 || kernel_size == 0 || kernel_size > h.min(w) + 2 * (kernel_size / 2) {
                    return bad("invalid conv geometry".into());
                }
            }
            Architecture::TinyConvNet {
                channels1,
                channels2,
                fc_units,
            } => {
                let [_, h, w] = self.input_shape;
                if channels1 == 0 || channels2 == 0 || fc_units == 0 || h < 4 || w < 4 {
                    return bad("TinyConvNet needs nonzero sizes and inputs ≥ 4×4".into());
                }
            }
            _ => {}
        }
        let hidden: &[usize] = match &self.architecture {
            Architecture::LinearSoftmax => &[],
            Architecture::MlpOneHidden { hidden_units } => &[*hidden_units],
            Architecture::ConvOneHidden { channels, .. } => &[*channels],
            Architecture::TinyConvNet {
                channels1,
                channels2,
                fc_units,
            } => &[*channels1, *channels2, *fc_units],
        };
        if hidden.iter().any(|&u| self.scaled(u) == 0) {
            return bad(format!(
                "width multiplier {} leaves a layer empty",
                self.width_multiplier
            ));
        }
        Ok(())
    }
}
