//! Table-shaped CSV and JSON output for metric reports.

use crate::error::Result;
use crate::metrics::MetricsReport;

pub const CSV_HEADER: &str = "condition,runs,accuracy_sd,accuracy_sd_err,ce_sd,ce_sd_err,\
pairwise_disagree,pairwise_spearman,ensemble_delta";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per report. SDs and their errors get 4 decimals, percentages 1,
/// Spearman ρ 3.
pub fn report_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{:.4},{:.4},{:.4},{:.4},{:.1},{:.3},{:.1}\n",
            csv_field(&r.condition),
            r.runs,
            r.accuracy_sd,
            r.accuracy_sd_err,
            r.ce_sd,
            r.ce_sd_err,
            r.pairwise_disagree,
            r.pairwise_spearman,
            r.ensemble_delta
        ));
    }
    out
}

/// Full-precision mirror of [`report_csv`].
pub fn report_json(reports: &[MetricsReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}

pub fn parse_report_json(text: &str) -> Result<Vec<MetricsReport>> {
    Ok(serde_json::from_str(text)?)
}
