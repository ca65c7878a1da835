mod common;

use common::*;
use proptest::prelude::*;
use varlab_core::metrics::{
    accuracy, ensemble_delta, ensemble_predict, linear_cka, pairwise_disagreement, pairwise_spearman,
    percentile_nearest_rank, report_predictions, sd_with_error, EnsembleMetric, ReportOptions,
};
use varlab_core::numerics::Tensor;

#[test]
fn library_matches_brute_force_oracles() {
    let g = metric_oracle_gaps();
    assert!(g.fixtures >= 90);
    assert!(g.disagreement <= 1e-12, "disagreement gap {}", g.disagreement);
    assert!(g.spearman <= 1e-12, "spearman gap {}", g.spearman);
    assert!(g.ensemble_acc <= 1e-12, "ensemble accuracy gap {}", g.ensemble_acc);
    assert!(g.ensemble_ce <= 1e-12, "ensemble CE gap {}", g.ensemble_ce);
    assert!(g.percentile == 0.0, "percentile gap {}", g.percentile);
    assert!(g.cka <= 1e-12, "CKA gap {}", g.cka);
}

#[test]
fn cka_invariances_hold() {
    assert!(cka_invariance_gap() < 1e-6);
}

#[test]
fn exhaustive_two_model_label_patterns() {
    // Every pair of one-hot prediction patterns on 3 examples × 3 classes.
    let patterns: Vec<[usize; 3]> = (0..27).map(|k| [k % 3, (k / 3) % 3, k / 9]).collect();
    let onehot = |p: &[usize; 3]| {
        let mut d = vec![0.0f32; 9];
        for (i, &c) in p.iter().enumerate() {
            d[i * 3 + c] = 4.0;
        }
        matrix(3, 3, d)
    };
    let labels = [0, 1, 2];
    for a in &patterns {
        for b in &patterns {
            let preds = [onehot(a), onehot(b)];
            assert_eq!(pairwise_disagreement(&preds).unwrap(), disagreement(&preds));
            let lib = ensemble_delta(&preds, &labels, EnsembleMetric::Accuracy).unwrap();
            assert!((lib - ensemble_deltas(&preds, &labels, true)[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn probability_ensemble_is_the_mean_of_softmaxes() {
    let (preds, _) = fixture(77, 3, 6, 4, false);
    let ens = ensemble_predict(&preds).unwrap();
    let members: Vec<Vec<f64>> = preds.iter().map(|p| p.probabilities()).collect();
    for (k, p) in ens.probabilities().iter().enumerate() {
        let mean = members.iter().map(|m| m[k]).sum::<f64>() / 3.0;
        assert!((p - mean).abs() < 1e-6);
    }
}

#[test]
fn report_fields_agree_with_components() {
    let (preds, labels) = fixture(5, 4, 8, 3, false);
    let opts = ReportOptions {
        bootstrap_reps: 200,
        ..ReportOptions::default()
    };
    let r = report_predictions("fx", &preds, &labels, None, &opts).unwrap();
    assert_eq!(r.runs, 4);
    assert_eq!(r.pairwise_disagree, pairwise_disagreement(&preds).unwrap());
    assert_eq!(r.pairwise_spearman, pairwise_spearman(&preds).unwrap().mean);
    let accs: Vec<f64> = preds.iter().map(|p| accuracy(p, &labels).unwrap()).collect();
    assert_eq!(
        (r.accuracy_sd, r.accuracy_sd_err),
        sd_with_error(&accs, 200, 0).unwrap()
    );
    let again = report_predictions("fx", &preds, &labels, None, &opts).unwrap();
    assert_eq!(r, again);
    assert!(report_predictions("fx", &preds[..1], &labels, None, &opts).is_err());
}

fn arb_models() -> impl Strategy<Value = (Vec<Vec<f32>>, usize, usize)> {
    (2usize..5, 1usize..9, 2usize..5).prop_flat_map(|(r, n, c)| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f32..3.0, n * c), r),
            Just(n),
            Just(c),
        )
    })
}

proptest! {
    #[test]
    fn disagreement_is_a_bounded_symmetric_mean((models, n, c) in arb_models()) {
        let preds: Vec<_> = models.iter().map(|d| matrix(n, c, d.clone())).collect();
        let d = pairwise_disagreement(&preds).unwrap();
        prop_assert!((0.0..=100.0).contains(&d));
        let mut rev = preds.clone();
        rev.reverse();
        prop_assert!((d - pairwise_disagreement(&rev).unwrap()).abs() < 1e-12);
        let same = vec![preds[0].clone(), preds[0].clone()];
        prop_assert_eq!(pairwise_disagreement(&same).unwrap(), 0.0);
    }

    #[test]
    fn spearman_is_bounded_and_one_for_monotone_copies((models, n, c) in arb_models()) {
        let preds: Vec<_> = models.iter().map(|d| matrix(n, c, d.clone())).collect();
        if let Ok(s) = pairwise_spearman(&preds) {
            prop_assert!((-1.0..=1.0).contains(&s.mean));
        }
        let shifted = matrix(n, c, models[0].iter().map(|v| v * 2.0 + 1.0).collect());
        if let Ok(s) = pairwise_spearman(&[preds[0].clone(), shifted]) {
            prop_assert!((s.mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cka_is_in_unit_interval(seed in 0u64..1000) {
        let (p, _) = fixture(seed, 2, 6, 3, false);
        if let Ok(v) = linear_cka(p[0].logits(), p[1].logits()) {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn percentiles_are_monotone_members(values in prop::collection::vec(-10.0f64..10.0, 1..40), a in 0.0f64..100.0, b in 0.0f64..100.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let pl = percentile_nearest_rank(&values, lo);
        let ph = percentile_nearest_rank(&values, hi);
        prop_assert!(pl <= ph);
        prop_assert!(values.contains(&pl));
        prop_assert_eq!(pl, percentile(&values, lo));
    }

    #[test]
    fn sd_with_error_is_deterministic(values in prop::collection::vec(-5.0f64..5.0, 2..12), seed in 0u64..100) {
        let a = sd_with_error(&values, 50, seed).unwrap();
        prop_assert_eq!(a, sd_with_error(&values, 50, seed).unwrap());
        prop_assert!(a.0 >= 0.0 && a.1 >= 0.0);
    }
}

#[test]
fn cka_rejects_mismatched_rows() {
    let x = Tensor::new(vec![3, 2], vec![1., 2., 3., 4., 5., 7.]).unwrap();
    let y = Tensor::new(vec![2, 2], vec![1., 2., 3., 5.]).unwrap();
    assert!(linear_cka(&x, &y).is_err());
}
