use crate::error::{Error, Result};
use crate::numerics::derive_stream;

const BOOTSTRAP_TAG: u32 = 0x600;

/// Sample standard deviation with the `n − 1` denominator.
///
/// Deviations are taken about the first value before averaging, so a set
/// of identical values gives exactly zero instead of rounding residue.
pub fn sample_sd(values: &[f64]) -> f64 {
    let Some(&pivot) = values.first() else {
        return f64::NAN;
    };
    let n = values.len() as f64;
    let shifted: Vec<f64> = values.iter().map(|v| v - pivot).collect();
    let mean = shifted.iter().sum::<f64>() / n;
    (shifted.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Standard deviation plus a bootstrap estimate of its own standard error.
///
/// `err` is the standard deviation of the sample SD across `bootstrap_reps`
/// resamples with replacement, driven by a stream derived from `seed`.
pub fn sd_with_error(values: &[f64], bootstrap_reps: usize, seed: u64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Metric(format!(
            "standard deviation needs at least 2 values, got {}",
            values.len()
        )));
    }
    let sd = sample_sd(values);
    if bootstrap_reps < 2 {
        return Ok((sd, 0.0));
    }
    let mut stream = derive_stream(seed, BOOTSTRAP_TAG, 0);
    let n = values.len();
    let mut resample = vec![0.0; n];
    let sds: Vec<f64> = (0..bootstrap_reps)
        .map(|_| {
            for r in resample.iter_mut() {
                *r = values[stream.below(n as u64) as usize];
            }
            sample_sd(&resample)
        })
        .collect();
    Ok((sd, sample_sd(&sds)))
}

/// Nearest-rank percentile (`p` in percent) of unsorted data.
pub fn percentile_nearest_rank(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty data");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
