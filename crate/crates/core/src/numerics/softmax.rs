/// Smallest probability used when taking logs of predicted probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Log-softmax of one row, evaluated in binary64 with max subtraction.
pub fn log_softmax(row: &[f32]) -> Vec<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
    let sum: f64 = row.iter().map(|&v| (v as f64 - m).exp()).sum();
    let lse = m + sum.ln();
    row.iter().map(|&v| v as f64 - lse).collect()
}

/// Binary64 softmax of a binary32 row, with max subtraction.
pub fn softmax(row: &[f32]) -> Vec<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
    let e: Vec<f64> = row.iter().map(|&v| (v as f64 - m).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// `-ln p(label)` with the probability clamped below at [`PROB_FLOOR`].
pub fn nll_clamped(row: &[f32], label: usize) -> f64 {
    let lp = log_softmax(row)[label];
    (-lp).min(-PROB_FLOOR.ln())
}

/// Binary32 softmax into `out`, with max subtraction.
pub fn softmax_f32(row: &[f32], out: &mut [f32]) {
    let m = row.iter().fold(f32::NEG_INFINITY, |a, &v| a.max(v));
    let mut sum = 0.0f32;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
