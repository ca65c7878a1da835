//! Variability and diversity measurements over sets of trained models.

mod basic;
mod cka;
mod pairwise;
mod report;
mod stats;

pub use basic::{accuracy, cross_entropy};
pub use cka::linear_cka;
pub use pairwise::{
    ensemble_delta, ensemble_delta_pairs, ensemble_predict, ensemble_predict_with, pairs, pairwise_disagreement,
    pairwise_spearman, Averaging, EnsembleMetric, SpearmanSummary,
};
pub use report::{report, report_predictions, MetricsReport, ReportOptions};
pub use stats::{percentile_nearest_rank, sample_sd, sd_with_error};
