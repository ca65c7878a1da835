use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ActivationCapture;
use crate::numerics::derive_stream;
use crate::training::{PredictionMatrix, RunRecord};

use super::cka::{cka_centered, Centered};
use super::pairwise::{ensemble_delta_pairs, pairs, Averaging, EnsembleMetric};
use super::{accuracy, cross_entropy, pairwise_disagreement, pairwise_spearman, sd_with_error};

const CKA_SUBSET_TAG: u32 = 0x601;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub bootstrap_reps: usize,
    pub seed: u64,
    /// At most this many models enter the CKA pair average.
    pub cka_pair_cap: usize,
    pub averaging: Averaging,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            bootstrap_reps: 1000,
            seed: 0,
            cka_pair_cap: 25,
            averaging: Averaging::Probabilities,
        }
    }
}

/// One row of the variability table plus supporting detail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub condition: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub mean_cross_entropy: f64,
    /// Percentage points.
    pub accuracy_sd: f64,
    pub accuracy_sd_err: f64,
    /// Nats.
    pub ce_sd: f64,
    pub ce_sd_err: f64,
    /// Percent.
    pub pairwise_disagree: f64,
    pub pairwise_spearman: f64,
    pub spearman_pairs_skipped: usize,
    /// Percentage points; Eq.-1 style accuracy gain of two-model ensembles.
    pub ensemble_delta: f64,
    /// Nats; same quantity for cross-entropy (negative is an improvement).
    pub ensemble_delta_ce: f64,
    /// Fraction of pairs whose accuracy ensemble delta is positive.
    pub ensemble_delta_positive_fraction: f64,
    pub cka: BTreeMap<String, f64>,
    pub cka_models: Vec<usize>,
    pub averaging: Averaging,
    pub bootstrap_reps: usize,
    pub seed: u64,
}

/// Report over a condition's runs, including per-layer CKA.
pub fn report(condition: &str, runs: &[RunRecord], labels: &[usize], options: &ReportOptions) -> Result<MetricsReport> {
    if runs.len() < 2 {
        return Err(Error::Metric(format!(
            "condition `{condition}` has {} run(s); at least 2 are needed",
            runs.len()
        )));
    }
    let preds: Vec<PredictionMatrix> = runs.iter().map(|r| r.predictions.clone()).collect();
    let acts: Vec<&ActivationCapture> = runs.iter().map(|r| &r.activations).collect();
    report_predictions(condition, &preds, labels, Some(&acts), options)
}

fn cka_subset(n: usize, cap: usize, seed: u64) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut s = derive_stream(seed, CKA_SUBSET_TAG, 0);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, s.below(i as u64 + 1) as usize);
    }
    let mut chosen = idx[..cap].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Report over bare prediction matrices (e.g. mitigated predictions).
pub fn report_predictions(
    condition: &str,
    preds: &[PredictionMatrix],
    labels: &[usize],
    activations: Option<&[&ActivationCapture]>,
    options: &ReportOptions,
) -> Result<MetricsReport> {
    if preds.len() < 2 {
        return Err(Error::Metric(format!(
            "condition `{condition}` has {} model(s); at least 2 are needed",
            preds.len()
        )));
    }
    let accs: Vec<f64> = preds.iter().map(|p| accuracy(p, labels)).collect::<Result<_>>()?;
    let ces: Vec<f64> = preds.iter().map(|p| cross_entropy(p, labels)).collect::<Result<_>>()?;
    let (accuracy_sd, accuracy_sd_err) = sd_with_error(&accs, options.bootstrap_reps, options.seed)?;
    let (ce_sd, ce_sd_err) = sd_with_error(&ces, options.bootstrap_reps, options.seed.wrapping_add(1))?;
    let spearman = pairwise_spearman(preds)?;
    let delta_acc = ensemble_delta_pairs(preds, labels, EnsembleMetric::Accuracy, options.averaging)?;
    let delta_ce = ensemble_delta_pairs(preds, labels, EnsembleMetric::CrossEntropy, options.averaging)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let mut cka = BTreeMap::new();
    let mut cka_models = Vec::new();
    if let Some(acts) = activations.filter(|a| a.iter().all(|c| !c.layers.is_empty())) {
        cka_models = cka_subset(acts.len(), options.cka_pair_cap.max(2), options.seed);
        for layer in acts[0].names() {
            let centered: Vec<Centered> = cka_models
                .iter()
                .map(|&i| {
                    let t = acts[i]
                        .get(layer)
                        .ok_or_else(|| Error::Metric(format!("run {i} lacks activations for `{layer}`")))?;
                    Centered::new(t)
                })
                .collect::<Result<_>>()?;
            let vals: Vec<f64> = pairs(centered.len())
                .map(|(a, b)| cka_centered(&centered[a], &centered[b]))
                .collect::<Result<_>>()?;
            cka.insert(layer.to_string(), mean(&vals));
        }
    }

    Ok(MetricsReport {
        condition: condition.to_string(),
        runs: preds.len(),
        mean_accuracy: mean(&accs),
        mean_cross_entropy: mean(&ces),
        accuracy_sd,
        accuracy_sd_err,
        ce_sd,
        ce_sd_err,
        pairwise_disagree: pairwise_disagreement(preds)?,
        pairwise_spearman: spearman.mean,
        spearman_pairs_skipped: spearman.skipped.len(),
        ensemble_delta: mean(&delta_acc),
        ensemble_delta_ce: mean(&delta_ce),
        ensemble_delta_positive_fraction: delta_acc.iter().filter(|d| **d > 0.0).count() as f64
            / delta_acc.len() as f64,
        cka,
        cka_models,
        averaging: options.averaging,
        bootstrap_reps: options.bootstrap_reps,
        seed: options.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_is_capped_sorted_and_seeded() {
        assert_eq!(cka_subset(5, 25, 1), vec![0, 1, 2, 3, 4]);
        let s = cka_subset(100, 25, 7);
        assert_eq!(s.len(), 25);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, cka_subset(100, 25, 7));
        assert_ne!(s, cka_subset(100, 25, 8));
    }
}
