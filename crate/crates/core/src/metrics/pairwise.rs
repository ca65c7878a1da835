use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, softmax, Tensor, PROB_FLOOR};
use crate::training::PredictionMatrix;

use super::{accuracy, cross_entropy};

/// How member predictions are combined into an ensemble prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Probabilities,
    Logits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMetric {
    Accuracy,
    CrossEntropy,
}

/// All unordered index pairs `(i, j)`, `i < j`, in lexicographic order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
}

fn check_set(preds: &[PredictionMatrix]) -> Result<()> {
    if preds.len() < 2 {
        return Err(Error::Metric(format!(
            "pairwise metrics need at least 2 models, got {}",
            preds.len()
        )));
    }
    let (r, c) = (preds[0].rows(), preds[0].cols());
    if let Some(bad) = preds.iter().find(|p| p.rows() != r || p.cols() != c) {
        return Err(Error::ShapeMismatch {
            op: "pairwise",
            left: vec![r, c],
            right: vec![bad.rows(), bad.cols()],
        });
    }
    Ok(())
}

/// Mean over all model pairs of the percent of examples whose argmax differs.
pub fn pairwise_disagreement(preds: &[PredictionMatrix]) -> Result<f64> {
    check_set(preds)?;
    let labels: Vec<Vec<usize>> = preds
        .iter()
        .map(|p| (0..p.rows()).map(|i| argmax(p.row(i))).collect())
        .collect();
    let n = preds[0].rows() as f64;
    let per_pair: Vec<f64> = pairs(preds.len())
        .map(|(a, b)| {
            let diff = labels[a].iter().zip(&labels[b]).filter(|(x, y)| x != y).count();
            100.0 * diff as f64 / n
        })
        .collect();
    Ok(per_pair.iter().sum::<f64>() / per_pair.len() as f64)
}

/// 1-based ranks with ties assigned their average rank.
pub(crate) fn average_ranks(values: &[f32]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && values[idx[j]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpearmanSummary {
    pub mean: f64,
    pub pairs_used: usize,
    /// Pairs skipped because one side was constant.
    pub skipped: Vec<(usize, usize)>,
}

/// Mean Spearman ρ between flattened (row-major) logit vectors over all pairs.
pub fn pairwise_spearman(preds: &[PredictionMatrix]) -> Result<SpearmanSummary> {
    check_set(preds)?;
    let ranks: Vec<Vec<f64>> = preds.iter().map(|p| average_ranks(p.logits().data())).collect();
    let mut total = 0.0;
    let mut used = 0;
    let mut skipped = Vec::new();
    for (a, b) in pairs(preds.len()) {
        match pearson(&ranks[a], &ranks[b]) {
            Some(r) => {
                total += r;
                used += 1;
            }
            None => skipped.push((a, b)),
        }
    }
    if used == 0 {
        return Err(Error::Metric("every Spearman pair was degenerate".into()));
    }
    Ok(SpearmanSummary {
        mean: total / used as f64,
        pairs_used: used,
        skipped,
    })
}

const LOG_PROB_FLOOR: f64 = 1e-300;

/// Probability-averaged ensemble, stored as log-probabilities.
pub fn ensemble_predict(preds: &[PredictionMatrix]) -> Result<PredictionMatrix> {
    ensemble_predict_with(preds, Averaging::Probabilities)
}

pub fn ensemble_predict_with(preds: &[PredictionMatrix], averaging: Averaging) -> Result<PredictionMatrix> {
    check_set(preds)?;
    let (rows, cols) = (preds[0].rows(), preds[0].cols());
    let k = preds.len() as f64;
    let mut out = Vec::with_capacity(rows * cols);
    let mut acc = vec![0.0f64; cols];
    for i in 0..rows {
        acc.fill(0.0);
        for p in preds {
            match averaging {
                Averaging::Probabilities => {
                    for (a, q) in acc.iter_mut().zip(softmax(p.row(i))) {
                        *a += q;
                    }
                }
                Averaging::Logits => {
                    for (a, &z) in acc.iter_mut().zip(p.row(i)) {
                        *a += z as f64;
                    }
                }
            }
        }
        out.extend(acc.iter().map(|a| match averaging {
            Averaging::Probabilities => (a / k).max(LOG_PROB_FLOOR).ln() as f32,
            Averaging::Logits => (a / k) as f32,
        }));
    }
    PredictionMatrix::new(Tensor::new(vec![rows, cols], out)?)
}

fn metric(p: &PredictionMatrix, labels: &[usize], m: EnsembleMetric) -> Result<f64> {
    match m {
        EnsembleMetric::Accuracy => accuracy(p, labels),
        EnsembleMetric::CrossEntropy => cross_entropy(p, labels),
    }
}

/// Metric of a binary64 probability matrix, with the same tie and clamping
/// rules as [`accuracy`] and [`cross_entropy`].
fn metric_of_probs(probs: &[f64], cols: usize, labels: &[usize], m: EnsembleMetric) -> f64 {
    let n = labels.len() as f64;
    match m {
        EnsembleMetric::Accuracy => {
            let correct = probs
                .chunks_exact(cols)
                .zip(labels)
                .filter(|(row, &y)| {
                    let mut best = 0;
                    for (i, &v) in row.iter().enumerate().skip(1) {
                        if v > row[best] {
                            best = i;
                        }
                    }
                    best == y
                })
                .count();
            100.0 * correct as f64 / n
        }
        EnsembleMetric::CrossEntropy => {
            probs
                .chunks_exact(cols)
                .zip(labels)
                .map(|(row, &y)| -row[y].max(PROB_FLOOR).ln())
                .sum::<f64>()
                / n
        }
    }
}

/// `f(ensemble(a, b)) − (f(a) + f(b)) / 2` for every pair, in [`pairs`] order.
///
/// The two-model ensemble is evaluated in binary64 without being rounded
/// back to a binary32 prediction matrix.
pub fn ensemble_delta_pairs(
    preds: &[PredictionMatrix],
    labels: &[usize],
    m: EnsembleMetric,
    averaging: Averaging,
) -> Result<Vec<f64>> {
    check_set(preds)?;
    let single: Vec<f64> = preds.iter().map(|p| metric(p, labels, m)).collect::<Result<_>>()?;
    let cols = preds[0].cols();
    let probs: Vec<Vec<f64>> = match averaging {
        Averaging::Probabilities => preds.iter().map(|p| p.probabilities()).collect(),
        Averaging::Logits => Vec::new(),
    };
    let mut ens = vec![0.0f64; preds[0].rows() * cols];
    Ok(pairs(preds.len())
        .map(|(a, b)| {
            match averaging {
                Averaging::Probabilities => {
                    for ((e, pa), pb) in ens.iter_mut().zip(&probs[a]).zip(&probs[b]) {
                        *e = (pa + pb) / 2.0;
                    }
                }
                Averaging::Logits => {
                    for (i, out) in ens.chunks_exact_mut(cols).enumerate() {
                        let z: Vec<f64> = preds[a]
                            .row(i)
                            .iter()
                            .zip(preds[b].row(i))
                            .map(|(&x, &y)| (x as f64 + y as f64) / 2.0)
                            .collect();
                        let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let sum: f64 = z.iter().map(|v| (v - mx).exp()).sum();
                        for (o, v) in out.iter_mut().zip(&z) {
                            *o = (v - mx).exp() / sum;
                        }
                    }
                }
            }
            metric_of_probs(&ens, cols, labels, m) - (single[a] + single[b]) / 2.0
        })
        .collect())
}

/// Mean of [`ensemble_delta_pairs`] with probability averaging.
pub fn ensemble_delta(preds: &[PredictionMatrix], labels: &[usize], m: EnsembleMetric) -> Result<f64> {
    let d = ensemble_delta_pairs(preds, labels, m, Averaging::Probabilities)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}
