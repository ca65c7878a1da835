use crate::error::{Error, Result};
use crate::models::Params;

use super::{OptimizerKind, TrainConfig};

/// Velocity (SGD) or first/second moments (Adam).
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub first: Params,
    pub second: Option<Params>,
    pub steps: usize,
}

impl OptimizerState {
    pub fn new(params: &Params, kind: &OptimizerKind) -> Self {
        Self {
            first: params.zeros_like(),
            second: matches!(kind, OptimizerKind::Adam { .. }).then(|| params.zeros_like()),
            steps: 0,
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut Params, max_norm: f32) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, t)| t.data())
        .map(|&g| g as f64 * g as f64)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm as f64 {
        let scale = (max_norm as f64 / norm) as f32;
        for t in grads.tensors_mut() {
            t.data_mut().iter_mut().for_each(|g| *g *= scale);
        }
    }
    norm
}

/// One parameter update.
///
/// SGD: `v ← m·v + (g + wd·w)`, `w ← w − lr·v`.
/// Adam: bias-corrected moments of `g + wd·w`, `w ← w − lr·m̂/(√v̂ + ε)`.
/// Optional global-norm clipping is applied to the raw gradient first.
pub fn optimizer_step(
    params: &mut Params,
    grads: &mut Params,
    state: &mut OptimizerState,
    lr: f32,
    config: &TrainConfig,
) -> Result<()> {
    let finite = grads.iter().all(|(_, t)| t.is_finite());
    if !finite {
        return Err(Error::NonFinite {
            what: "gradient",
            epoch: None,
            step: state.steps,
        });
    }
    if let Some(max_norm) = config.grad_clip_norm {
        clip_global_norm(grads, max_norm);
    }
    state.steps += 1;
    let wd = config.weight_decay;
    match config.optimizer {
        OptimizerKind::Sgd => {
            let m = config.momentum;
            for i in 0..params.len() {
                let w = params.tensor_mut(i).data_mut();
                let g = grads.tensor(i).data();
                let v = state.first.tensor_mut(i).data_mut();
                for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
                    *v = m * *v + (g + wd * *w);
                    *w -= lr * *v;
                }
            }
        }
        OptimizerKind::Adam { beta1, beta2, epsilon } => {
            let t = state.steps as i32;
            let c1 = 1.0 - (beta1 as f64).powi(t);
            let c2 = 1.0 - (beta2 as f64).powi(t);
            let second = state.second.as_mut().expect("Adam state has second moments");
            for i in 0..params.len() {
                let w = params.tensor_mut(i).data_mut();
                let g = grads.tensor(i).data();
                let m1 = state.first.tensor_mut(i).data_mut();
                let m2 = second.tensor_mut(i).data_mut();
                for (((w, &g), m1), m2) in w.iter_mut().zip(g).zip(m1.iter_mut()).zip(m2.iter_mut()) {
                    let g = g + wd * *w;
                    *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                    *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                    let mhat = (*m1 as f64 / c1) as f32;
                    let vhat = (*m2 as f64 / c2) as f32;
                    *w -= lr * mhat / (vhat.sqrt() + epsilon);
                }
            }
        }
    }
    Ok(())
}
