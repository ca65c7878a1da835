use crate::error::{Error, Result};
use crate::numerics::{
    col2im, gemm, gemm_at_b, im2col, nll_clamped, softmax_f32, transpose_slice, Conv2dGeometry, RngStream, Tensor,
};
use crate::training::noise_factors;

use super::{ActivationCapture, Architecture, ModelSpec, Params};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Randomness consumed by one forward/backward pair.
#[derive(Clone, Debug)]
pub struct PassStreams {
    pub dropout: RngStream,
    /// `None` is the deterministic setting: no low-level noise at all.
    pub noise: Option<RngStream>,
    pub noise_rel: f32,
    /// Also perturb the upstream gradient of each linear/conv layer.
    pub noise_in_backward: bool,
}

impl PassStreams {
    /// No dropout draws matter (eval) and no noise.
    pub fn quiet() -> Self {
        Self {
            dropout: RngStream::from_state(0),
            noise: None,
            noise_rel: 0.0,
            noise_in_backward: false,
        }
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        weight: usize,
    },
    Conv {
        geom: Conv2dGeometry,
        out_channels: usize,
        weight: usize,
    },
    Relu,
    MaxPool {
        dims: [usize; 3],
    },
    Dropout,
    Capture(String),
}

#[derive(Clone, Debug)]
enum Aux {
    None,
    Noise(Vec<f32>),
    Mask(Vec<f32>),
    Argmax(Vec<usize>),
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    batch: usize,
    inputs: Vec<Vec<f32>>,
    aux: Vec<Aux>,
    logits: Tensor,
    capture: ActivationCapture,
}

impl ForwardPass {
    pub fn logits(&self) -> &Tensor {
        &self.logits
    }

    pub fn capture(&self) -> &ActivationCapture {
        &self.capture
    }

    pub fn into_parts(self) -> (Tensor, ActivationCapture) {
        (self.logits, self.capture)
    }

    /// Dropout multipliers (`0` or `1/keep`) in layer order.
    pub fn dropout_masks(&self) -> Vec<&[f32]> {
        self.aux
            .iter()
            .filter_map(|a| match a {
                Aux::Mask(m) => Some(m.as_slice()),
                _ => None,
            })
            .collect()
    }

    /// Low-level noise factors applied to each linear/conv output, in layer order.
    pub fn noise_factors(&self) -> Vec<&[f32]> {
        self.aux
            .iter()
            .filter_map(|a| match a {
                Aux::Noise(m) => Some(m.as_slice()),
                _ => None,
            })
            .collect()
    }
}

/// A compiled [`ModelSpec`]: the layer sequence and parameter layout.
#[derive(Clone, Debug)]
pub struct Model {
    spec: ModelSpec,
    layers: Vec<Layer>,
    layout: Vec<(String, Vec<usize>)>,
}

struct Builder {
    layers: Vec<Layer>,
    layout: Vec<(String, Vec<usize>)>,
    dims: [usize; 3],
}

impl Builder {
    fn features(&self) -> usize {
        self.dims.iter().product()
    }

    fn dense(&mut self, name: &str, outputs: usize) {
        let inputs = self.features();
        let weight = self.layout.len();
        self.layout.push((format!("{name}.weight"), vec![inputs, outputs]));
        self.layout.push((format!("{name}.bias"), vec![outputs]));
        self.layers.push(Layer::Dense {
            inputs,
            outputs,
            weight,
        });
        self.dims = [outputs, 1, 1];
    }

    fn conv(&mut self, name: &str, out_channels: usize, kernel: usize) {
        let [c, h, w] = self.dims;
        let geom = Conv2dGeometry {
            in_channels: c,
            height: h,
            width: w,
            kernel,
            pad: kernel / 2,
        };
        let weight = self.layout.len();
        self.layout
            .push((format!("{name}.weight"), vec![out_channels, c, kernel, kernel]));
        self.layout.push((format!("{name}.bias"), vec![out_channels]));
        self.layers.push(Layer::Conv {
            geom,
            out_channels,
            weight,
        });
        self.dims = [out_channels, geom.out_height(), geom.out_width()];
    }

    fn pool(&mut self) {
        let [c, h, w] = self.dims;
        self.layers.push(Layer::MaxPool { dims: self.dims });
        self.dims = [c, h / 2, w / 2];
    }

    fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }
}

impl Model {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut b = Builder {
            layers: Vec::new(),
            layout: Vec::new(),
            dims: spec.input_shape,
        };
        let dropout = spec.dropout_rate > 0.0;
        match spec.architecture {
            Architecture::LinearSoftmax => {}
            Architecture::MlpOneHidden { hidden_units } => {
                b.dense("hidden", spec.scaled(hidden_units));
                b.push(Layer::Relu);
                b.push(Layer::Capture("hidden".into()));
                if dropout {
                    b.push(Layer::Dropout);
                }
            }
            Architecture::ConvOneHidden { channels, kernel_size } => {
                b.conv("conv", spec.scaled(channels), kernel_size);
                b.push(Layer::Relu);
                b.push(Layer::Capture("conv".into()));
                if dropout {
                    b.push(Layer::Dropout);
                }
            }
            Architecture::TinyConvNet {
                channels1,
                channels2,
                fc_units,
            } => {
                b.conv("conv1", spec.scaled(channels1), 3);
                b.push(Layer::Relu);
                b.pool();
                b.push(Layer::Capture("conv1".into()));
                b.conv("conv2", spec.scaled(channels2), 3);
                b.push(Layer::Relu);
                b.pool();
                b.push(Layer::Capture("conv2".into()));
                b.dense("fc", spec.scaled(fc_units));
                b.push(Layer::Relu);
                b.push(Layer::Capture("fc".into()));
                if dropout {
                    b.push(Layer::Dropout);
                }
            }
        }
        b.dense("output", spec.class_count);
        Ok(Self {
            spec: spec.clone(),
            layers: b.layers,
            layout: b.layout,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// `(name, shape)` of every parameter tensor in order.
    pub fn layout(&self) -> &[(String, Vec<usize>)] {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Names of the layers whose activations are captured.
    pub fn capture_layers(&self) -> Vec<&str> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Capture(n) => Some(n.as_str()),
                _ => None,
            })
            .collect()
    }

    /// He initialization: weights `N(0, 2/fan_in)` drawn in layout order,
    /// biases zero.
    pub fn init_params(&self, stream: &mut RngStream) -> Params {
        let entries = self
            .layout
            .iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                if name.ends_with(".bias") {
                    return (name.clone(), Tensor::zeros(shape.clone()));
                }
                let fan_in: usize = match shape.len() {
                    2 => shape[0],
                    _ => shape[1..].iter().product(),
                };
                let scale = (2.0 / fan_in as f64).sqrt() as f32;
                let data = (0..len).map(|_| stream.gaussian() * scale).collect();
                (name.clone(), Tensor::new(shape.clone(), data).expect("layout"))
            })
            .collect();
        Params::new(entries)
    }

    fn check_params(&self, params: &Params) -> Result<()> {
        let ok = params.len() == self.layout.len()
            && params
                .iter()
                .zip(&self.layout)
                .all(|((n, t), (ln, ls))| n == ln && t.shape() == ls.as_slice());
        if ok {
            Ok(())
        } else {
            Err(Error::Config("parameters do not match the model layout".into()))
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.spec.input_shape {
            return Err(Error::ShapeMismatch {
                op: "forward",
                left: s.to_vec(),
                right: self.spec.input_shape.to_vec(),
            });
        }
        Ok(s[0])
    }

    /// Runs the network on a `B×C×H×W` batch.
    ///
    /// Dropout is active only in [`Mode::Train`]. The noise hook, when
    /// `streams.noise` is set, multiplies every linear/conv output. Activation
    /// capture is recorded only in [`Mode::Eval`].
    pub fn forward(
        &self,
        params: &Params,
        batch: &Tensor,
        mode: Mode,
        streams: &mut PassStreams,
    ) -> Result<ForwardPass> {
        self.check_params(params)?;
        let b = self.check_batch(batch)?;
        self.run_forward(params, batch.data().to_vec(), b, mode, streams, true)
    }

    fn run_forward(
        &self,
        params: &Params,
        mut x: Vec<f32>,
        b: usize,
        mode: Mode,
        streams: &mut PassStreams,
        keep: bool,
    ) -> Result<ForwardPass> {
        let mut inputs = Vec::new();
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut capture = ActivationCapture::default();
        for layer in &self.layers {
            let mut a = Aux::None;
            let out = match layer {
                Layer::Dense {
                    inputs: k,
                    outputs: n,
                    weight,
                    ..
                } => {
                    let w = params.tensor(*weight).data();
                    let bias = params.tensor(*weight + 1).data();
                    let mut z = gemm(&x, w, b, *k, *n);
                    crate::numerics::add_bias_rows(&mut z, bias);
                    if let Some(noise) = streams.noise.as_mut() {
                        let f = noise_factors(z.len(), noise, streams.noise_rel);
                        z.iter_mut().zip(&f).for_each(|(v, f)| *v *= f);
                        a = Aux::Noise(f);
                    }
                    z
                }
                Layer::Conv {
                    geom,
                    out_channels,
                    weight,
                    ..
                } => {
                    let w = params.tensor(*weight).data();
                    let bias = params.tensor(*weight + 1).data();
                    let p = geom.out_positions();
                    let in_len = geom.in_channels * geom.height * geom.width;
                    let mut z = Vec::with_capacity(b * out_channels * p);
                    for ex in x.chunks_exact(in_len) {
                        let cols = im2col(ex, geom);
                        let mut zz = gemm(w, &cols, *out_channels, geom.patch_len(), p);
                        for (plane, &bv) in zz.chunks_exact_mut(p).zip(bias) {
                            plane.iter_mut().for_each(|v| *v += bv);
                        }
                        z.extend_from_slice(&zz);
                    }
                    if let Some(noise) = streams.noise.as_mut() {
                        let f = noise_factors(z.len(), noise, streams.noise_rel);
                        z.iter_mut().zip(&f).for_each(|(v, f)| *v *= f);
                        a = Aux::Noise(f);
                    }
                    z
                }
                Layer::Relu => {
                    let mut z = x.clone();
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                    z
                }
                Layer::MaxPool { dims } => {
                    let t = Tensor::new(vec![b, dims[0], dims[1], dims[2]], x.clone())?;
                    let pooled = crate::numerics::max_pool2d(&t)?;
                    a = Aux::Argmax(pooled.argmax);
                    pooled.output.into_data()
                }
                Layer::Dropout => {
                    if mode == Mode::Train && self.spec.dropout_rate > 0.0 {
                        let keep = 1.0 - self.spec.dropout_rate as f64;
                        let scale = (1.0 / keep) as f32;
                        let mask: Vec<f32> = (0..x.len())
                            .map(|_| if streams.dropout.next_f64() < keep { scale } else { 0.0 })
                            .collect();
                        let z = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
                        a = Aux::Mask(mask);
                        z
                    } else {
                        x.clone()
                    }
                }
                Layer::Capture(name) => {
                    if mode == Mode::Eval {
                        let feats = x.len() / b.max(1);
                        capture
                            .layers
                            .push((name.clone(), Tensor::new(vec![b, feats], x.clone())?));
                    }
                    x.clone()
                }
            };
            if keep {
                inputs.push(std::mem::replace(&mut x, out));
            } else {
                x = out;
            }
            aux.push(a);
        }
        let logits = Tensor::new(vec![b, self.spec.class_count], x)?;
        Ok(ForwardPass {
            batch: b,
            inputs,
            aux,
            logits,
            capture,
        })
    }

    /// Mean clamped cross-entropy of the pass and its parameter gradients.
    ///
    /// Reuses the dropout masks and noise factors recorded in `pass`. When
    /// `streams.noise_in_backward` is set, each linear/conv upstream gradient
    /// is additionally perturbed with fresh draws from `streams.noise`.
    pub fn backward(
        &self,
        params: &Params,
        pass: &ForwardPass,
        labels: &[usize],
        streams: &mut PassStreams,
    ) -> Result<(f64, Params)> {
        let b = pass.batch;
        let c = self.spec.class_count;
        if labels.len() != b || pass.inputs.len() != self.layers.len() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: vec![b],
                right: vec![labels.len()],
            });
        }
        let logits = pass.logits.data();
        let mut loss = 0.0f64;
        let mut dy = vec![0.0f32; b * c];
        let inv_b = 1.0 / b as f32;
        for (i, (&y, row)) in labels.iter().zip(logits.chunks_exact(c)).enumerate() {
            if y >= c {
                return Err(Error::Config(format!("label {y} out of range")));
            }
            loss += nll_clamped(row, y);
            let d = &mut dy[i * c..(i + 1) * c];
            softmax_f32(row, d);
            d[y] -= 1.0;
            d.iter_mut().for_each(|v| *v *= inv_b);
        }
        loss /= b as f64;

        let mut grads = params.zeros_like();
        let first_param_layer = self
            .layers
            .iter()
            .position(|l| matches!(l, Layer::Dense { .. } | Layer::Conv { .. }))
            .unwrap_or(0);
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let x = &pass.inputs[li];
            let need_dx = li > first_param_layer;
            match (layer, &pass.aux[li]) {
                (
                    Layer::Dense {
                        inputs: k,
                        outputs: n,
                        weight,
                        ..
                    },
                    a,
                ) => {
                    self.backprop_noise(&mut dy, a, streams);
                    let dw = gemm_at_b(x, &dy, b, *k, *n);
                    let mut db = vec![0.0f32; *n];
                    for row in dy.chunks_exact(*n) {
                        db.iter_mut().zip(row).for_each(|(g, v)| *g += v);
                    }
                    grads.tensor_mut(*weight).data_mut().copy_from_slice(&dw);
                    grads.tensor_mut(*weight + 1).data_mut().copy_from_slice(&db);
                    if need_dx {
                        let wt = transpose_slice(params.tensor(*weight).data(), *k, *n);
                        dy = gemm(&dy, &wt, b, *n, *k);
                    }
                }
                (
                    Layer::Conv {
                        geom,
                        out_channels,
                        weight,
                        ..
                    },
                    a,
                ) => {
                    self.backprop_noise(&mut dy, a, streams);
                    let o = *out_channels;
                    let p = geom.out_positions();
                    let patch = geom.patch_len();
                    let in_len = geom.in_channels * geom.height * geom.width;
                    let w = params.tensor(*weight).data();
                    let wt = transpose_slice(w, o, patch);
                    let mut dw = vec![0.0f32; o * patch];
                    let mut db = vec![0.0f32; o];
                    let mut dx = if need_dx { vec![0.0f32; b * in_len] } else { Vec::new() };
                    for (e, (ex, dz)) in x.chunks_exact(in_len).zip(dy.chunks_exact(o * p)).enumerate() {
                        let cols = im2col(ex, geom);
                        let cols_t = transpose_slice(&cols, patch, p);
                        let dw_ex = gemm(dz, &cols_t, o, p, patch);
                        dw.iter_mut().zip(&dw_ex).for_each(|(g, v)| *g += v);
                        for (g, plane) in db.iter_mut().zip(dz.chunks_exact(p)) {
                            *g += plane.iter().fold(0.0f32, |s, v| s + v);
                        }
                        if need_dx {
                            let dcols = gemm(&wt, dz, patch, o, p);
                            col2im(&dcols, geom, &mut dx[e * in_len..(e + 1) * in_len]);
                        }
                    }
                    grads.tensor_mut(*weight).data_mut().copy_from_slice(&dw);
                    grads.tensor_mut(*weight + 1).data_mut().copy_from_slice(&db);
                    if need_dx {
                        dy = dx;
                    }
                }
                (Layer::Relu, _) => {
                    dy.iter_mut().zip(x).for_each(|(g, &v)| {
                        if v <= 0.0 {
                            *g = 0.0
                        }
                    });
                }
                (Layer::MaxPool { .. }, Aux::Argmax(idx)) => {
                    let mut dx = vec![0.0f32; x.len()];
                    for (&i, &g) in idx.iter().zip(&dy) {
                        dx[i] += g;
                    }
                    dy = dx;
                }
                (Layer::Dropout, Aux::Mask(mask)) => {
                    dy.iter_mut().zip(mask).for_each(|(g, m)| *g *= m);
                }
                _ => {}
            }
            if !need_dx && matches!(layer, Layer::Dense { .. } | Layer::Conv { .. }) {
                break;
            }
        }
        Ok((loss, grads))
    }

    fn backprop_noise(&self, dy: &mut [f32], aux: &Aux, streams: &mut PassStreams) {
        if let Aux::Noise(f) = aux {
            dy.iter_mut().zip(f).for_each(|(g, f)| *g *= f);
            if streams.noise_in_backward {
                if let Some(noise) = streams.noise.as_mut() {
                    let extra = noise_factors(dy.len(), noise, streams.noise_rel);
                    dy.iter_mut().zip(&extra).for_each(|(g, f)| *g *= f);
                }
            }
        }
    }

    /// Forward then backward on one batch.
    pub fn loss_and_grad(
        &self,
        params: &Params,
        batch: &Tensor,
        labels: &[usize],
        mode: Mode,
        streams: &mut PassStreams,
    ) -> Result<(f64, Params)> {
        let pass = self.forward(params, batch, mode, streams)?;
        self.backward(params, &pass, labels, streams)
    }

    /// Eval-mode logits for every row of `inputs`, without noise, processed
    /// in chunks. Rows are independent so chunking does not change any bit.
    pub fn predict(&self, params: &Params, inputs: &Tensor) -> Result<Tensor> {
        Ok(self.predict_with_capture(params, inputs, false)?.0)
    }

    /// Eval-mode logits plus the captured hidden activations for every row.
    pub fn predict_with_capture(
        &self,
        params: &Params,
        inputs: &Tensor,
        capture: bool,
    ) -> Result<(Tensor, ActivationCapture)> {
        self.check_params(params)?;
        let n = self.check_batch(inputs)?;
        const CHUNK: usize = 250;
        let row = inputs.row_len();
        let mut logits = Vec::with_capacity(n * self.spec.class_count);
        let mut layers: Vec<(String, Vec<f32>, usize)> = Vec::new();
        let mut quiet = PassStreams::quiet();
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let x = inputs.data()[start * row..end * row].to_vec();
            let mut pass = self.run_forward(params, x, end - start, Mode::Eval, &mut quiet, false)?;
            if !capture {
                pass.capture.layers.clear();
            }
            logits.extend_from_slice(pass.logits.data());
            for (i, (name, t)) in pass.capture.layers.into_iter().enumerate() {
                if layers.len() <= i {
                    layers.push((name, Vec::new(), t.row_len()));
                }
                layers[i].1.extend_from_slice(t.data());
            }
        }
        let capture = ActivationCapture {
            layers: layers
                .into_iter()
                .map(|(name, data, w)| Ok((name, Tensor::new(vec![n, w], data)?)))
                .collect::<Result<_>>()?,
        };
        Ok((Tensor::new(vec![n, self.spec.class_count], logits)?, capture))
    }
}
