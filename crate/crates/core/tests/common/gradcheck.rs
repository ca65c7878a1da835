//! Binary64 reference networks for gradient checks.

use varlab_core::models::{Architecture, Mode, Model, ModelSpec, PassStreams};
use varlab_core::numerics::{RngStream, Tensor};
use varlab_core::Params;

pub fn gaussian_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut s = RngStream::from_state(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| s.gaussian()).collect()).unwrap()
}

/// Reference forward pass in binary64, recording every ReLU/pool decision
/// so finite differences that cross a kink can be discarded.
struct Oracle<'a> {
    spec: &'a ModelSpec,
    masks: Vec<Vec<f64>>,
}

#[derive(PartialEq, Default)]
struct Pattern(Vec<bool>, Vec<usize>);

fn param<'a>(p: &'a [(String, Vec<usize>, Vec<f64>)], name: &str) -> &'a (String, Vec<usize>, Vec<f64>) {
    p.iter().find(|(n, _, _)| n == name).unwrap()
}

fn dense(x: &[f64], b: usize, p: &[(String, Vec<usize>, Vec<f64>)], name: &str) -> Vec<f64> {
    let (_, ws, w) = param(p, &format!("{name}.weight"));
    let (_, _, bias) = param(p, &format!("{name}.bias"));
    let (inp, out) = (ws[0], ws[1]);
    let mut z = vec![0.0; b * out];
    for n in 0..b {
        for j in 0..out {
            let mut acc = bias[j];
            for k in 0..inp {
                acc += x[n * inp + k] * w[k * out + j];
            }
            z[n * out + j] = acc;
        }
    }
    z
}

/// Direct zero-padded convolution, same spatial size (odd kernel).
fn conv(
    x: &[f64],
    b: usize,
    dims: [usize; 3],
    p: &[(String, Vec<usize>, Vec<f64>)],
    name: &str,
) -> (Vec<f64>, [usize; 3]) {
    let (_, ws, w) = param(p, &format!("{name}.weight"));
    let (_, _, bias) = param(p, &format!("{name}.bias"));
    let (oc, ic, k) = (ws[0], ws[1], ws[2]);
    let [c, h, wd] = dims;
    assert_eq!(c, ic);
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; b * oc * h * wd];
    for n in 0..b {
        for o in 0..oc {
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = bias[o];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - pad;
                                let sx = xx as isize + kx as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                    continue;
                                }
                                acc += x[((n * c + ci) * h + sy as usize) * wd + sx as usize]
                                    * w[((o * c + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((n * oc + o) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    (out, [oc, h, wd])
}

fn relu(x: &mut [f64], pat: &mut Pattern) {
    for v in x {
        pat.0.push(*v > 0.0);
        *v = v.max(0.0);
    }
}

fn pool(x: &[f64], b: usize, dims: [usize; 3], pat: &mut Pattern) -> (Vec<f64>, [usize; 3]) {
    let [c, h, w] = dims;
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    for n in 0..b {
        for ch in 0..c {
            let plane = &x[(n * c + ch) * h * w..][..h * w];
            for y in 0..oh {
                for xx in 0..ow {
                    let cand = [
                        (2 * y) * w + 2 * xx,
                        (2 * y) * w + 2 * xx + 1,
                        (2 * y + 1) * w + 2 * xx,
                        (2 * y + 1) * w + 2 * xx + 1,
                    ];
                    let mut best = 0;
                    for i in 1..4 {
                        if plane[cand[i]] > plane[cand[best]] {
                            best = i;
                        }
                    }
                    pat.1.push(best);
                    out.push(plane[cand[best]]);
                }
            }
        }
    }
    (out, [c, oh, ow])
}

impl Oracle<'_> {
    fn apply_dropout(&self, x: &mut [f64]) {
        if let Some(m) = self.masks.first() {
            x.iter_mut().zip(m).for_each(|(v, m)| *v *= m);
        }
    }

    fn loss(&self, p: &[(String, Vec<usize>, Vec<f64>)], x: &[f64], b: usize, labels: &[usize]) -> (f64, Pattern) {
        let mut pat = Pattern::default();
        let dims = self.spec.input_shape;
        let logits = match self.spec.architecture {
            Architecture::LinearSoftmax => dense(x, b, p, "output"),
            Architecture::MlpOneHidden { .. } => {
                let mut h = dense(x, b, p, "hidden");
                relu(&mut h, &mut pat);
                self.apply_dropout(&mut h);
                dense(&h, b, p, "output")
            }
            Architecture::ConvOneHidden { .. } => {
                let (mut h, _) = conv(x, b, dims, p, "conv");
                relu(&mut h, &mut pat);
                self.apply_dropout(&mut h);
                dense(&h, b, p, "output")
            }
            Architecture::TinyConvNet { .. } => {
                let (mut h, d) = conv(x, b, dims, p, "conv1");
                relu(&mut h, &mut pat);
                let (h, d) = pool(&h, b, d, &mut pat);
                let (mut h, d) = conv(&h, b, d, p, "conv2");
                relu(&mut h, &mut pat);
                let (h, _) = pool(&h, b, d, &mut pat);
                let mut h = dense(&h, b, p, "fc");
                relu(&mut h, &mut pat);
                self.apply_dropout(&mut h);
                dense(&h, b, p, "output")
            }
        };
        let c = self.spec.class_count;
        let mut total = 0.0;
        for (n, &y) in labels.iter().enumerate() {
            let row = &logits[n * c..(n + 1) * c];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
            total += lse - row[y];
        }
        (total / b as f64, pat)
    }
}

fn to_f64(params: &Params) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    params
        .iter()
        .map(|(n, t)| {
            (
                n.to_string(),
                t.shape().to_vec(),
                t.data().iter().map(|&v| v as f64).collect(),
            )
        })
        .collect()
}

/// Analytic vs central-difference gradients; returns how many coordinates were compared.
pub fn gradient_check(spec: ModelSpec, mode: Mode) -> Result<usize, String> {
    let model = Model::new(&spec).unwrap();
    let params = model.init_params(&mut RngStream::from_state(11));
    let [c, h, w] = spec.input_shape;
    let b = 5;
    let x = gaussian_tensor(vec![b, c, h, w], 12);
    let labels: Vec<usize> = (0..b).map(|i| i % spec.class_count).collect();
    let mut streams = PassStreams {
        dropout: RngStream::from_state(13),
        ..PassStreams::quiet()
    };
    let pass = model.forward(&params, &x, mode, &mut streams).unwrap();
    let masks: Vec<Vec<f64>> = pass
        .dropout_masks()
        .iter()
        .map(|m| m.iter().map(|&v| v as f64).collect())
        .collect();
    if mode == Mode::Train && spec.dropout_rate > 0.0 {
        assert_eq!(masks.len(), 1);
        assert!(masks[0].contains(&0.0), "mask should drop something");
    }
    let (loss, grads) = model.backward(&params, &pass, &labels, &mut streams).unwrap();

    let oracle = Oracle { spec: &spec, masks };
    let xd: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
    let base = to_f64(&params);
    let (ref_loss, base_pat) = oracle.loss(&base, &xd, b, &labels);
    if (loss - ref_loss).abs() >= 1e-5 * ref_loss.abs().max(1.0) {
        return Err(format!("loss {loss} vs oracle {ref_loss}"));
    }

    let hstep = 1e-3;
    let (mut checked, mut skipped) = (0, 0);
    for (ti, (name, t)) in grads.iter().enumerate() {
        for i in 0..t.len() {
            let mut plus = base.clone();
            plus[ti].2[i] += hstep;
            let mut minus = base.clone();
            minus[ti].2[i] -= hstep;
            let (lp, pp) = oracle.loss(&plus, &xd, b, &labels);
            let (lm, pm) = oracle.loss(&minus, &xd, b, &labels);
            if pp != base_pat || pm != base_pat {
                skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * hstep);
            let analytic = t.data()[i] as f64;
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-4);
            if rel >= 1e-3 {
                return Err(format!("{name}[{i}]: analytic {analytic} numeric {numeric} rel {rel}"));
            }
            checked += 1;
        }
    }
    if checked <= 10 * skipped.max(1) {
        return Err(format!("checked {checked}, skipped {skipped}"));
    }
    Ok(checked)
}

pub fn linear() -> ModelSpec {
    ModelSpec::new(Architecture::LinearSoftmax, [1, 3, 3], 4)
}

pub fn mlp() -> ModelSpec {
    ModelSpec::new(Architecture::MlpOneHidden { hidden_units: 7 }, [1, 3, 4], 3)
}

pub fn conv_one() -> ModelSpec {
    ModelSpec::new(
        Architecture::ConvOneHidden {
            channels: 3,
            kernel_size: 3,
        },
        [2, 4, 4],
        3,
    )
}

pub fn tiny() -> ModelSpec {
    ModelSpec::new(
        Architecture::TinyConvNet {
            channels1: 2,
            channels2: 3,
            fc_units: 5,
        },
        [1, 8, 8],
        3,
    )
}
