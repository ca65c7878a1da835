//! One-ULP perturbation of initial parameters and the empirical condition
//! number of the end-to-end training map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Params;
use crate::numerics::{next_representable, Direction, RngStream};

/// Exactly which value was changed and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitFlipDescriptor {
    pub layer: String,
    pub index: usize,
    pub direction: Direction,
    pub old_value: f32,
    pub new_value: f32,
    pub old_bits: u32,
    pub new_bits: u32,
}

impl BitFlipDescriptor {
    pub fn delta(&self) -> f64 {
        (self.new_value as f64 - self.old_value as f64).abs()
    }
}

/// Moves one uniformly chosen weight of the first learnable layer (biases
/// excluded) to its adjacent binary32 value in a uniformly chosen direction.
///
/// Draws the index first, then the direction.
pub fn apply_random_bit_flip(params: &Params, stream: RngStream) -> Result<(Params, BitFlipDescriptor)> {
    let (layer, weights) = params
        .iter()
        .next()
        .filter(|(name, t)| name.ends_with(".weight") && !t.is_empty())
        .ok_or_else(|| Error::Config("first layer has no weights to perturb".into()))?;
    let layer = layer.to_string();
    let mut s = stream;
    let index = s.below(weights.len() as u64) as usize;
    let direction = if s.coin() { Direction::Up } else { Direction::Down };
    let old_value = weights.data()[index];
    let new_value = next_representable(old_value, direction)?;
    let mut out = params.clone();
    out.tensor_mut(0).data_mut()[index] = new_value;
    Ok((
        out,
        BitFlipDescriptor {
            layer,
            index,
            direction,
            old_value,
            new_value,
            old_bits: old_value.to_bits(),
            new_bits: new_value.to_bits(),
        },
    ))
}

/// `|f(x + δx) − f(x)| / δx` for a scalar output metric.
pub fn condition_number(metric_base: f64, metric_perturbed: f64, delta_x: f64) -> Result<f64> {
    if delta_x.is_nan() || delta_x <= 0.0 {
        return Err(Error::Metric(format!(
            "input perturbation must be positive, got {delta_x}"
        )));
    }
    Ok((metric_perturbed - metric_base).abs() / delta_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ulp_distance, Tensor};

    fn params(n: usize) -> Params {
        let mut s = RngStream::from_state(11);
        Params::new(vec![
            (
                "hidden.weight".into(),
                Tensor::new(vec![n], (0..n).map(|_| s.gaussian() * 0.01).collect()).unwrap(),
            ),
            ("hidden.bias".into(), Tensor::zeros(vec![3])),
        ])
    }

    #[test]
    fn golden_pick_for_a_fixed_stream() {
        let (_, d) = apply_random_bit_flip(&params(512), RngStream::from_state(0)).unwrap();
        // Frozen from the first two splitmix64 outputs of state 0.
        assert_eq!((d.index, d.direction), (452, Direction::Down));
    }

    #[test]
    fn changes_exactly_one_weight_by_one_ulp() {
        let p = params(100);
        for seed in 0..50 {
            let (q, d) = apply_random_bit_flip(&p, RngStream::from_state(seed)).unwrap();
            let changed: Vec<usize> = (0..100)
                .filter(|&i| p.tensor(0).data()[i].to_bits() != q.tensor(0).data()[i].to_bits())
                .collect();
            assert_eq!(changed, vec![d.index]);
            assert_eq!(ulp_distance(d.old_value, d.new_value), 1);
            assert!(p.tensor(1).bitwise_eq(q.tensor(1)));
        }
    }

    #[test]
    fn step_size_near_the_example_magnitude() {
        let p = Params::new(vec![(
            "w.weight".into(),
            Tensor::new(vec![1], vec![-0.006_651_431]).unwrap(),
        )]);
        let (_, d) = apply_random_bit_flip(&p, RngStream::from_state(1)).unwrap();
        assert!((d.delta() - 4.66e-10).abs() < 1e-11, "{}", d.delta());
    }

    #[test]
    fn zero_weight_steps_into_subnormal() {
        let p = Params::new(vec![("w.weight".into(), Tensor::zeros(vec![1]))]);
        let (_, d) = apply_random_bit_flip(&p, RngStream::from_state(1)).unwrap();
        assert_eq!(d.new_value.abs().to_bits(), 1);
    }

    #[test]
    fn index_choice_is_uniform() {
        let p = params(100);
        let mut counts = [0usize; 100];
        for seed in 0..10_000u64 {
            let (_, d) = apply_random_bit_flip(&p, RngStream::from_state(seed * 7919)).unwrap();
            counts[d.index] += 1;
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - 100.0).powi(2) / 100.0).sum();
        // Upper 0.001 quantile of chi-square with 99 degrees of freedom.
        assert!(chi2 < 148.23, "chi2 = {chi2}");
    }

    #[test]
    fn condition_number_examples() {
        let ce = condition_number(0.3519, 0.34335, 4.7e-10).unwrap();
        assert!((ce / 1.8e7 - 1.0).abs() < 0.1, "{ce}");
        let acc = condition_number(90.0, 90.12, 4.7e-10).unwrap();
        assert!((acc / 2.6e8 - 1.0).abs() < 0.1, "{acc}");
        assert_eq!(condition_number(1.0, 1.0, 1e-9).unwrap(), 0.0);
        assert!(condition_number(1.0, 2.0, 0.0).is_err());
    }
}
