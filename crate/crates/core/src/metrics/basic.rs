use crate::error::{Error, Result};
use crate::numerics::{argmax, nll_clamped};
use crate::training::PredictionMatrix;

fn check(preds: &PredictionMatrix, labels: &[usize]) -> Result<()> {
    if preds.rows() != labels.len() || preds.rows() == 0 {
        return Err(Error::ShapeMismatch {
            op: "metric",
            left: vec![preds.rows(), preds.cols()],
            right: vec![labels.len()],
        });
    }
    Ok(())
}

/// Percent of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(preds: &PredictionMatrix, labels: &[usize]) -> Result<f64> {
    check(preds, labels)?;
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(preds.row(i)) == y)
        .count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

/// Mean `-ln p(label)` in nats with probabilities clamped at `1e-12`.
pub fn cross_entropy(preds: &PredictionMatrix, labels: &[usize]) -> Result<f64> {
    check(preds, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| nll_clamped(preds.row(i), y))
        .sum();
    Ok(total / labels.len() as f64)
}
