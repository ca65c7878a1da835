use crate::error::{Error, Result};
use crate::numerics::{derive_stream, Tensor};

use super::{Dataset, Normalization, Split};

const TEMPLATE_TAG: u32 = 0x5100;
const TRAIN_TAG: u32 = 0x5101;
const TEST_TAG: u32 = 0x5102;
const BUMPS_PER_CLASS: usize = 3;
const BUMP_AMPLITUDE: f32 = 0.25;

/// Per-class image templates: a sum of a few Gaussian bumps at random
/// positions with random widths and signs, one pattern per channel.
fn templates(seed: u64, dims: [usize; 3], class_count: usize) -> Vec<Vec<f32>> {
    let [c, h, w] = dims;
    let mut s = derive_stream(seed, TEMPLATE_TAG, 0);
    (0..class_count)
        .map(|_| {
            let mut t = vec![0.0f32; c * h * w];
            for ch in 0..c {
                for _ in 0..BUMPS_PER_CLASS {
                    let cy = s.next_f64() * h as f64;
                    let cx = s.next_f64() * w as f64;
                    let sigma = 1.5 + 1.5 * s.next_f64();
                    let sign = if s.coin() { 1.0 } else { -1.0 };
                    for y in 0..h {
                        for x in 0..w {
                            let d2 = (y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2);
                            let v = sign * (-d2 / (2.0 * sigma * sigma)).exp();
                            t[(ch * h + y) * w + x] += BUMP_AMPLITUDE * v as f32;
                        }
                    }
                }
            }
            t
        })
        .collect()
}

fn sample(
    templates: &[Vec<f32>],
    n: usize,
    dims: [usize; 3],
    noise: f32,
    seed: u64,
    tag: u32,
    split: Split,
) -> Result<Dataset> {
    let class_count = templates.len();
    let len = dims.iter().product::<usize>();
    let mut s = derive_stream(seed, tag, 0);
    let mut data = Vec::with_capacity(n * len);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % class_count;
        labels.push(label);
        for &t in &templates[label] {
            data.push(t + noise * s.gaussian());
        }
    }
    let images = Tensor::new(vec![n, dims[0], dims[1], dims[2]], data)?;
    Dataset::new(images, labels, class_count, split)
}

/// Class-conditional Gaussian-blob images.
///
/// Labels cycle through the classes, so every split is balanced to within
/// one example. Both splits are normalized with constants fitted on the
/// raw training images.
pub fn synth_dataset(
    seed: u64,
    n_train: usize,
    n_test: usize,
    dims: [usize; 3],
    class_count: usize,
    noise: f32,
) -> Result<(Dataset, Dataset)> {
    if class_count < 2 {
        return Err(Error::Config("synthetic data needs at least 2 classes".into()));
    }
    if noise.is_nan() || noise < 0.0 {
        return Err(Error::Config("noise scale must be non-negative".into()));
    }
    let t = templates(seed, dims, class_count);
    let mut train = sample(&t, n_train, dims, noise, seed, TRAIN_TAG, Split::Train)?;
    let mut test = sample(&t, n_test, dims, noise, seed, TEST_TAG, Split::Test)?;
    let norm = Normalization::fit(train.images());
    train.normalize(norm)?;
    test.normalize(norm)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let a = synth_dataset(3, 50, 20, [1, 8, 8], 4, 1.0).unwrap();
        let b = synth_dataset(3, 50, 20, [1, 8, 8], 4, 1.0).unwrap();
        assert!(a.0.images().bitwise_eq(b.0.images()));
        assert!(a.1.images().bitwise_eq(b.1.images()));
        assert_eq!(a.0.labels(), b.0.labels());
        let c = synth_dataset(4, 50, 20, [1, 8, 8], 4, 1.0).unwrap();
        assert!(!a.0.images().bitwise_eq(c.0.images()));
    }

    #[test]
    fn labels_are_balanced() {
        let (train, _) = synth_dataset(1, 103, 10, [1, 4, 4], 10, 1.0).unwrap();
        let mut counts = [0usize; 10];
        for &l in train.labels() {
            counts[l] += 1;
        }
        assert!(counts.iter().all(|&c| c == 10 || c == 11));
    }

    #[test]
    fn rejects_degenerate_arguments() {
        assert!(synth_dataset(1, 10, 10, [1, 4, 4], 1, 1.0).is_err());
        assert!(synth_dataset(1, 10, 10, [1, 4, 4], 3, -1.0).is_err());
    }

    #[test]
    fn normalized_train_set_is_standardized() {
        let (train, _) = synth_dataset(2, 200, 10, [1, 8, 8], 5, 1.0).unwrap();
        let refit = Normalization::fit(train.images());
        assert!(refit.mean.abs() < 1e-5);
        assert!((refit.std - 1.0).abs() < 1e-4);
    }
}
