//! Self-contained SVG figures: accuracy SD against onset epoch, and
//! per-epoch cross-entropy bands across runs.

use std::fmt::Write;

use crate::metrics::{percentile_nearest_rank, sample_sd};
use crate::training::EpochMetrics;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 7] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];
/// Floor for the log-scale SD axis.
const LOG_FLOOR: f64 = 1e-8;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.max(LOG_FLOOR).log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo, hi) = (lo - pad, hi + pad);
        }
        Self { lo, hi, log }
    }

    /// Maps `v` into `[a, b]` (pixel range).
    fn map(&self, v: f64, a: f64, b: f64) -> f64 {
        let v = if self.log { v.max(LOG_FLOOR).log10() } else { v };
        a + (v - self.lo) / (self.hi - self.lo) * (b - a)
    }

    fn tick_label(&self, t: f64) -> String {
        if self.log {
            format!("1e{:.1}", t)
        } else {
            format!("{:.4}", t)
        }
    }
}

fn frame(out: &mut String, title: &str, xlabel: &str, ylabel: &str, x: &Axis, y: &Axis) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (MARGIN, W - MARGIN / 2.0, H - MARGIN, MARGIN);
    let _ = write!(
        out,
        r#"<g stroke="black" fill="none"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let tx = x.lo + f * (x.hi - x.lo);
        let ty = y.lo + f * (y.hi - y.lo);
        let px = x0 + f * (x1 - x0);
        let py = y0 + f * (y1 - y0);
        let _ = write!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            y0 + 16.0,
            x.tick_label(tx)
        );
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{py:.1}" text-anchor="end" font-size="11">{}</text>"#,
            x0 - 4.0,
            y.tick_label(ty)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        H - 20.0,
        escape(xlabel)
    );
    let _ = write!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(ylabel)
    );
}

fn px(x: &Axis, v: f64) -> f64 {
    x.map(v, MARGIN, W - MARGIN / 2.0)
}

fn py(y: &Axis, v: f64) -> f64 {
    y.map(v, H - MARGIN, MARGIN)
}

/// One series of the onset figure: `(onset epoch, accuracy SD)` points.
#[derive(Clone, Debug, PartialEq)]
pub struct OnsetSeries {
    pub label: String,
    pub points: Vec<(usize, f64)>,
}

/// Accuracy SD against onset epoch, one polyline with circle markers per series.
pub fn onset_svg(series: &[OnsetSeries]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let x = Axis::new(all().map(|p| p.0 as f64), false);
    let y = Axis::new(all().map(|p| p.1).chain([0.0]), false);
    let mut out = String::new();
    frame(
        &mut out,
        "Variability vs. onset epoch",
        "onset epoch",
        "accuracy SD (%)",
        &x,
        &y,
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(e, v)| format!("{:.2},{:.2}", px(&x, e as f64), py(&y, v)))
            .collect();
        if pts.len() > 1 {
            let _ = write!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
        }
        for &(e, v) in &s.points {
            let _ = write!(
                out,
                r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                px(&x, e as f64),
                py(&y, v)
            );
        }
        let _ = write!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" fill="{color}">{}</text>"#,
            W - MARGIN * 2.5,
            MARGIN + 16.0 * k as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Per-epoch spread of test cross-entropy across runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandPoint {
    pub epoch: usize,
    /// Nearest-rank 2.5th percentile.
    pub lo: f64,
    /// Nearest-rank 97.5th percentile.
    pub hi: f64,
    pub sd: f64,
}

/// Band over the epochs every history covers.
pub fn trace_band(histories: &[Vec<EpochMetrics>]) -> Vec<BandPoint> {
    let epochs = histories.iter().map(Vec::len).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let v: Vec<f64> = histories.iter().map(|h| h[e].test_cross_entropy).collect();
            BandPoint {
                epoch: histories[0][e].epoch,
                lo: percentile_nearest_rank(&v, 2.5),
                hi: percentile_nearest_rank(&v, 97.5),
                sd: if v.len() > 1 { sample_sd(&v) } else { 0.0 },
            }
        })
        .collect()
}

/// Two stacked panels: the 95% cross-entropy band (linear scale) and the
/// cross-entropy SD (log scale).
pub fn trace_svg(title: &str, histories: &[Vec<EpochMetrics>]) -> String {
    let band = trace_band(histories);
    let x = Axis::new(band.iter().map(|b| b.epoch as f64), false);
    let y = Axis::new(band.iter().flat_map(|b| [b.lo, b.hi]), false);
    let ys = Axis::new(band.iter().map(|b| b.sd), true);
    let mut out = String::new();
    frame(&mut out, title, "epoch", "test cross-entropy (nats)", &x, &y);
    let upper: Vec<String> = band
        .iter()
        .map(|b| format!("{:.2},{:.2}", px(&x, b.epoch as f64), py(&y, b.hi)))
        .collect();
    let lower: Vec<String> = band
        .iter()
        .rev()
        .map(|b| format!("{:.2},{:.2}", px(&x, b.epoch as f64), py(&y, b.lo)))
        .collect();
    let _ = write!(
        out,
        r##"<polygon class="band" fill="#1f77b4" fill-opacity="0.3" stroke="#1f77b4" points="{} {}"/>"##,
        upper.join(" "),
        lower.join(" ")
    );
    // SD inset, right axis on a log scale.
    let sd_pts: Vec<String> = band
        .iter()
        .map(|b| format!("{:.2},{:.2}", px(&x, b.epoch as f64), py(&ys, b.sd)))
        .collect();
    let _ = write!(
        out,
        r##"<polyline class="sd" fill="none" stroke="#d62728" stroke-width="2" stroke-dasharray="6 3" points="{}"/>"##,
        sd_pts.join(" ")
    );
    for k in 0..=4 {
        let t = ys.lo + k as f64 / 4.0 * (ys.hi - ys.lo);
        let _ = write!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="11" fill="#d62728">SD {}</text>"##,
            W - MARGIN / 2.0 + 2.0 - 40.0,
            H - MARGIN + k as f64 / 4.0 * (2.0 * MARGIN - H),
            ys.tick_label(t)
        );
    }
    out.push_str("</svg>\n");
    out
}
