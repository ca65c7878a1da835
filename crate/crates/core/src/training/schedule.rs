use super::{Schedule, TrainConfig};

fn cosine(max_lr: f64, t: f64) -> f64 {
    max_lr * (1.0 + (std::f64::consts::PI * t).cos()) / 2.0
}

/// Learning rate for global step `step`.
///
/// Linear warmup from 0 over `warmup_epochs`, then a half cosine from
/// `max_lr` reaching exactly 0 on the last step of its span. The cyclic
/// schedule restarts the cosine in each of its equal segments; only the
/// first segment has warmup.
pub fn lr_at(config: &TrainConfig, step: usize, steps_per_epoch: usize) -> f32 {
    let max = config.max_lr as f64;
    let total = config.epochs * steps_per_epoch;
    let warm = config.warmup_epochs * steps_per_epoch;
    let (seg_len, pos, warm) = match config.schedule {
        Schedule::Cyclic { cycles } => {
            let seg = total / cycles;
            let idx = step / seg;
            (seg, step % seg, if idx == 0 { warm } else { 0 })
        }
        _ => (total, step, warm),
    };
    if pos < warm {
        return (max * pos as f64 / warm as f64) as f32;
    }
    let lr = match config.schedule {
        Schedule::Constant => max,
        _ => {
            let span = seg_len - warm;
            let t = if span <= 1 {
                1.0
            } else {
                (pos - warm) as f64 / (span - 1) as f64
            };
            cosine(max, t)
        }
    };
    lr as f32
}
