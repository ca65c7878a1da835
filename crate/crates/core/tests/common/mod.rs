//! Brute-force reference implementations shared by the metric tests and the
//! acceptance suite. Each one follows the textbook definition directly and
//! shares no code with the library beyond the input types.
#![allow(dead_code)]

pub mod gradcheck;

use varlab_core::metrics::{
    ensemble_delta_pairs, linear_cka, pairwise_disagreement, pairwise_spearman, percentile_nearest_rank, Averaging,
    EnsembleMetric,
};
use varlab_core::numerics::{RngStream, Tensor};
use varlab_core::PredictionMatrix;

pub fn matrix(rows: usize, cols: usize, data: Vec<f32>) -> PredictionMatrix {
    PredictionMatrix::new(Tensor::new(vec![rows, cols], data).unwrap()).unwrap()
}

fn rows(p: &PredictionMatrix) -> Vec<Vec<f64>> {
    (0..p.rows())
        .map(|i| p.row(i).iter().map(|&v| v as f64).collect())
        .collect()
}

/// First index holding the maximum.
fn first_max(row: &[f64]) -> usize {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row.iter().position(|&v| v == m).unwrap()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn all_pairs(r: usize) -> Vec<(usize, usize)> {
    let mut v = Vec::new();
    for a in 0..r {
        for b in 0..r {
            if a < b {
                v.push((a, b));
            }
        }
    }
    v
}

pub fn disagreement(preds: &[PredictionMatrix]) -> f64 {
    let pairs = all_pairs(preds.len());
    let mut total = 0.0;
    for &(a, b) in &pairs {
        let (ra, rb) = (rows(&preds[a]), rows(&preds[b]));
        let differ = ra.iter().zip(&rb).filter(|(x, y)| first_max(x) != first_max(y)).count();
        total += 100.0 * differ as f64 / ra.len() as f64;
    }
    total / pairs.len() as f64
}

/// Average rank by counting: 1 + #smaller + (#equal − 1) / 2.
fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let smaller = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        None
    } else {
        Some(cov / (vx * vy).sqrt())
    }
}

/// Mean Spearman ρ over pairs with non-constant rank vectors.
pub fn spearman(preds: &[PredictionMatrix]) -> Option<f64> {
    let flat: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| p.logits().data().iter().map(|&v| v as f64).collect())
        .collect();
    let vals: Vec<f64> = all_pairs(preds.len())
        .into_iter()
        .filter_map(|(a, b)| pearson(&ranks(&flat[a]), &ranks(&flat[b])))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

fn acc_of_probs(p: &[Vec<f64>], labels: &[usize]) -> f64 {
    100.0 * p.iter().zip(labels).filter(|(r, &y)| first_max(r) == y).count() as f64 / labels.len() as f64
}

fn ce_of_probs(p: &[Vec<f64>], labels: &[usize]) -> f64 {
    p.iter().zip(labels).map(|(r, &y)| -(r[y].max(1e-12)).ln()).sum::<f64>() / labels.len() as f64
}

/// Per-pair ensemble gain under probability averaging.
pub fn ensemble_deltas(preds: &[PredictionMatrix], labels: &[usize], accuracy: bool) -> Vec<f64> {
    let probs: Vec<Vec<Vec<f64>>> = preds
        .iter()
        .map(|p| rows(p).iter().map(|r| softmax(r)).collect())
        .collect();
    let f = |p: &[Vec<f64>]| {
        if accuracy {
            acc_of_probs(p, labels)
        } else {
            ce_of_probs(p, labels)
        }
    };
    all_pairs(preds.len())
        .into_iter()
        .map(|(a, b)| {
            let ens: Vec<Vec<f64>> = probs[a]
                .iter()
                .zip(&probs[b])
                .map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u + v) / 2.0).collect())
                .collect();
            f(&ens) - (f(&probs[a]) + f(&probs[b])) / 2.0
        })
        .collect()
}

/// Linear CKA via centered Gram matrices: HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)).
pub fn cka_gram(x: &Tensor, y: &Tensor) -> f64 {
    let n = x.rows();
    let gram = |t: &Tensor| -> Vec<Vec<f64>> {
        let r: Vec<Vec<f64>> = (0..n).map(|i| t.row(i).iter().map(|&v| v as f64).collect()).collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| r[i].iter().zip(&r[j]).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    };
    let center = |k: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let nf = n as f64;
        let row_mean: Vec<f64> = k.iter().map(|r| r.iter().sum::<f64>() / nf).collect();
        let total = row_mean.iter().sum::<f64>() / nf;
        (0..n)
            .map(|i| (0..n).map(|j| k[i][j] - row_mean[i] - row_mean[j] + total).collect())
            .collect()
    };
    let (k, l) = (center(gram(x)), center(gram(y)));
    let hsic = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> f64 {
        (0..n).map(|i| (0..n).map(|j| a[i][j] * b[i][j]).sum::<f64>()).sum()
    };
    hsic(&k, &l) / (hsic(&k, &k) * hsic(&l, &l)).sqrt()
}

/// Smallest value v with #(x ≤ v) ≥ p·n/100.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let need = p / 100.0 * values.len() as f64;
    let mut candidates = values.to_vec();
    candidates.sort_by(f64::total_cmp);
    for &v in &candidates {
        let at_most = values.iter().filter(|&&x| x <= v).count() as f64;
        if at_most >= need {
            return v;
        }
    }
    *candidates.last().unwrap()
}

/// Random fixture: `r` models of `n × c` logits. With `grid`, logits come
/// from a five-value grid so that ties are common.
pub fn fixture(seed: u64, r: usize, n: usize, c: usize, grid: bool) -> (Vec<PredictionMatrix>, Vec<usize>) {
    let mut s = RngStream::from_state(seed);
    let levels = [-1.0f32, 0.0, 0.5, 1.0, 2.0];
    let preds = (0..r)
        .map(|_| {
            let data = (0..n * c)
                .map(|_| {
                    if grid {
                        levels[s.below(5) as usize]
                    } else {
                        s.gaussian() * 2.0
                    }
                })
                .collect();
            matrix(n, c, data)
        })
        .collect();
    let labels = (0..n).map(|_| s.below(c as u64) as usize).collect();
    (preds, labels)
}

/// Largest absolute gap between library and oracle over a sweep of small
/// fixtures (N ≤ 8, C ≤ 4, R ≤ 4), covering both tie-heavy and continuous
/// logits. Returns the worst error for each metric.
pub struct OracleGaps {
    pub disagreement: f64,
    pub spearman: f64,
    pub ensemble_acc: f64,
    pub ensemble_ce: f64,
    pub percentile: f64,
    pub cka: f64,
    pub fixtures: usize,
}

pub fn metric_oracle_gaps() -> OracleGaps {
    let mut g = OracleGaps {
        disagreement: 0.0,
        spearman: 0.0,
        ensemble_acc: 0.0,
        ensemble_ce: 0.0,
        percentile: 0.0,
        cka: 0.0,
        fixtures: 0,
    };
    let mut seed = 0;
    for r in 2..=4 {
        for n in 1..=8 {
            for c in 2..=4 {
                for grid in [true, false] {
                    seed += 1;
                    let (preds, labels) = fixture(seed, r, n, c, grid);
                    g.fixtures += 1;
                    let gap = |a: f64, b: f64| (a - b).abs();
                    g.disagreement = g
                        .disagreement
                        .max(gap(pairwise_disagreement(&preds).unwrap(), disagreement(&preds)));
                    match (pairwise_spearman(&preds), spearman(&preds)) {
                        (Ok(s), Some(o)) => g.spearman = g.spearman.max(gap(s.mean, o)),
                        (Err(_), None) => {}
                        _ => g.spearman = f64::INFINITY,
                    }
                    for (acc, slot) in [(true, &mut g.ensemble_acc), (false, &mut g.ensemble_ce)] {
                        let m = if acc {
                            EnsembleMetric::Accuracy
                        } else {
                            EnsembleMetric::CrossEntropy
                        };
                        let lib = ensemble_delta_pairs(&preds, &labels, m, Averaging::Probabilities).unwrap();
                        let ora = ensemble_deltas(&preds, &labels, acc);
                        for (a, b) in lib.iter().zip(&ora) {
                            *slot = slot.max(gap(*a, *b));
                        }
                    }
                    let values: Vec<f64> = preds[0].logits().data().iter().map(|&v| v as f64).collect();
                    for p in [0.0, 2.5, 25.0, 50.0, 97.5, 100.0] {
                        g.percentile = g
                            .percentile
                            .max(gap(percentile_nearest_rank(&values, p), percentile(&values, p)));
                    }
                    if n >= 3 && !grid {
                        let (x, y) = (preds[0].logits(), preds[1].logits());
                        if let Ok(v) = linear_cka(x, y) {
                            g.cka = g.cka.max(gap(v, cka_gram(x, y)));
                        }
                    }
                }
            }
        }
    }
    g
}

/// Rotates the columns of `x` by a random orthogonal matrix (product of
/// Givens rotations), scales by `scale`, and shifts every column.
pub fn rotate_scale_shift(x: &Tensor, seed: u64, scale: f64) -> Tensor {
    let (n, p) = (x.rows(), x.row_len());
    let mut s = RngStream::from_state(seed);
    let mut rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().map(|&v| v as f64).collect()).collect();
    for _ in 0..3 * p {
        let a = s.below(p as u64) as usize;
        let b = s.below(p as u64) as usize;
        if a == b {
            continue;
        }
        let th = s.next_f64() * std::f64::consts::TAU;
        let (c, sn) = (th.cos(), th.sin());
        for r in rows.iter_mut() {
            let (u, v) = (r[a], r[b]);
            r[a] = c * u - sn * v;
            r[b] = sn * u + c * v;
        }
    }
    let data = rows
        .iter()
        .flat_map(|r| {
            r.iter()
                .enumerate()
                .map(|(j, v)| (v * scale + j as f64) as f32)
                .collect::<Vec<_>>()
        })
        .collect();
    Tensor::new(vec![n, p], data).unwrap()
}

/// Worst deviation of CKA from its invariances: CKA(X, X) = 1, symmetry,
/// and CKA(X, Y) = CKA(XQ·s + shift, Y).
pub fn cka_invariance_gap() -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let mut s = RngStream::from_state(1000 + seed);
        let (n, p, q) = (8, 4, 3);
        let x = Tensor::new(vec![n, p], (0..n * p).map(|_| s.gaussian()).collect()).unwrap();
        let y = Tensor::new(vec![n, q], (0..n * q).map(|_| s.gaussian()).collect()).unwrap();
        let base = linear_cka(&x, &y).unwrap();
        worst = worst.max((linear_cka(&x, &x).unwrap() - 1.0).abs());
        worst = worst.max((base - linear_cka(&y, &x).unwrap()).abs());
        let xr = rotate_scale_shift(&x, seed, 3.5);
        worst = worst.max((base - linear_cka(&xr, &y).unwrap()).abs());
    }
    worst
}
