//! Snapshot ensembles and test-time augmentation.

use serde::{Deserialize, Serialize};

use crate::data::{hflip_in_place, shifted_crop};
use crate::error::{Error, Result};
use crate::metrics::Averaging;
use crate::models::{Model, ModelSpec, Params};
use crate::numerics::{softmax, Tensor};
use crate::training::{PredictionMatrix, RunRecord};

/// Deterministic grid of test-time views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TtaSpec {
    pub flip: bool,
    pub crop: bool,
    #[serde(default)]
    pub pad_pixels: usize,
    #[serde(default = "one")]
    pub stride: usize,
}

fn one() -> usize {
    1
}

impl TtaSpec {
    pub const NONE: TtaSpec = TtaSpec {
        flip: false,
        crop: false,
        pad_pixels: 0,
        stride: 1,
    };
    pub const FLIP: TtaSpec = TtaSpec {
        flip: true,
        crop: false,
        pad_pixels: 0,
        stride: 1,
    };
    pub const CROP25: TtaSpec = TtaSpec {
        flip: false,
        crop: true,
        pad_pixels: 4,
        stride: 2,
    };
    pub const CROP81: TtaSpec = TtaSpec {
        flip: false,
        crop: true,
        pad_pixels: 4,
        stride: 1,
    };
    pub const FLIP_CROP81: TtaSpec = TtaSpec {
        flip: true,
        crop: true,
        pad_pixels: 4,
        stride: 1,
    };

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("TTA stride must be at least 1".into()));
        }
        if self.crop && self.pad_pixels == 0 {
            return Err(Error::Config("TTA crops need pad_pixels >= 1".into()));
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<usize> {
        if self.crop {
            (0..=2 * self.pad_pixels).step_by(self.stride).collect()
        } else {
            vec![self.pad_pixels]
        }
    }

    pub fn view_count(&self) -> usize {
        let per_axis = if self.crop {
            (2 * self.pad_pixels + 1).div_ceil(self.stride)
        } else {
            1
        };
        per_axis * per_axis * if self.flip { 2 } else { 1 }
    }

    /// Short name used in artifact file names, e.g. `flip-crop81`.
    pub fn tag(&self) -> String {
        let mut parts = Vec::new();
        if self.flip {
            parts.push("flip".to_string());
        }
        if self.crop {
            let c = self.view_count() / if self.flip { 2 } else { 1 };
            parts.push(format!("crop{c}p{}s{}", self.pad_pixels, self.stride));
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("-")
        }
    }

    /// (row offset, column offset, flipped) for every view, in output order.
    fn grid(&self) -> Vec<(usize, usize, bool)> {
        let offs = self.offsets();
        let mut v: Vec<_> = offs
            .iter()
            .flat_map(|&dy| offs.iter().map(move |&dx| (dy, dx, false)))
            .collect();
        if self.flip {
            let flipped: Vec<_> = v.iter().map(|&(dy, dx, _)| (dy, dx, true)).collect();
            v.extend(flipped);
        }
        v
    }
}

fn apply_view(src: &[f32], dims: [usize; 3], spec: &TtaSpec, view: (usize, usize, bool), dst: &mut [f32]) {
    let (dy, dx, flip) = view;
    if spec.crop {
        shifted_crop(src, dims, spec.pad_pixels, dy, dx, dst);
    } else {
        dst.copy_from_slice(src);
    }
    if flip {
        hflip_in_place(dst, dims);
    }
}

fn image_dims(shape: &[usize]) -> Result<[usize; 3]> {
    match shape {
        [c, h, w] | [1, c, h, w] => Ok([*c, *h, *w]),
        _ => Err(Error::ShapeMismatch {
            op: "tta_views",
            left: shape.to_vec(),
            right: vec![],
        }),
    }
}

/// Every view of one `C×H×W` example: offset grid in row-major order,
/// followed by the mirror of each grid view when `flip` is set.
pub fn tta_views(image: &Tensor, spec: &TtaSpec) -> Result<Vec<Tensor>> {
    spec.validate()?;
    let dims = image_dims(image.shape())?;
    spec.grid()
        .into_iter()
        .map(|view| {
            let mut out = vec![0.0; image.len()];
            apply_view(image.data(), dims, spec, view, &mut out);
            Tensor::new(dims.to_vec(), out)
        })
        .collect()
}

/// Streaming mean over ensemble members, in the same arithmetic as
/// [`crate::metrics::ensemble_predict_with`].
struct MeanAccumulator {
    acc: Vec<f64>,
    cols: usize,
    members: usize,
    first: Option<Tensor>,
    averaging: Averaging,
}

impl MeanAccumulator {
    fn new(averaging: Averaging) -> Self {
        Self {
            acc: Vec::new(),
            cols: 0,
            members: 0,
            first: None,
            averaging,
        }
    }

    fn add(&mut self, logits: Tensor) {
        let cols = logits.shape()[1];
        if self.members == 0 {
            self.acc = vec![0.0; logits.len()];
            self.cols = cols;
        }
        for (a, row) in self.acc.chunks_exact_mut(cols).zip(logits.data().chunks_exact(cols)) {
            match self.averaging {
                Averaging::Probabilities => a.iter_mut().zip(softmax(row)).for_each(|(a, p)| *a += p),
                Averaging::Logits => a.iter_mut().zip(row).for_each(|(a, &z)| *a += z as f64),
            }
        }
        if self.members == 0 {
            self.first = Some(logits);
        }
        self.members += 1;
    }

    /// A single member is returned untouched.
    fn finish(self) -> Result<PredictionMatrix> {
        let k = self.members as f64;
        match self.members {
            0 => Err(Error::Metric("empty ensemble".into())),
            1 => PredictionMatrix::new(self.first.expect("one member")),
            _ => {
                let rows = self.acc.len() / self.cols;
                let out = self
                    .acc
                    .iter()
                    .map(|a| match self.averaging {
                        Averaging::Probabilities => (a / k).max(1e-300).ln() as f32,
                        Averaging::Logits => (a / k) as f32,
                    })
                    .collect();
                PredictionMatrix::new(Tensor::new(vec![rows, self.cols], out)?)
            }
        }
    }
}

fn add_views(acc: &mut MeanAccumulator, model: &Model, params: &Params, images: &Tensor, spec: &TtaSpec) -> Result<()> {
    let dims = image_dims(&images.shape()[1..])?;
    let row = images.row_len();
    for view in spec.grid() {
        let logits = if view == (spec.pad_pixels, spec.pad_pixels, false) {
            model.predict(params, images)?
        } else {
            let mut buf = vec![0.0; images.len()];
            for (src, dst) in images.data().chunks_exact(row).zip(buf.chunks_exact_mut(row)) {
                apply_view(src, dims, spec, view, dst);
            }
            model.predict(params, &Tensor::new(images.shape().to_vec(), buf)?)?
        };
        acc.add(logits);
    }
    Ok(())
}

/// Mean prediction over every (parameter set × view) pair, uniformly
/// weighted. One parameter set and one view give the plain eval logits.
pub fn predict_views(
    model_spec: &ModelSpec,
    members: &[&Params],
    images: &Tensor,
    spec: &TtaSpec,
    averaging: Averaging,
) -> Result<PredictionMatrix> {
    spec.validate()?;
    let model = Model::new(model_spec)?;
    let mut acc = MeanAccumulator::new(averaging);
    for params in members {
        add_views(&mut acc, &model, params, images, spec)?;
    }
    acc.finish()
}

/// Eval-mode predictions averaged over the views of every test example.
pub fn tta_predict(
    model_spec: &ModelSpec,
    params: &Params,
    images: &Tensor,
    spec: &TtaSpec,
    averaging: Averaging,
) -> Result<PredictionMatrix> {
    predict_views(model_spec, &[params], images, spec, averaging)
}

fn check_snapshots(run: &RunRecord) -> Result<()> {
    if run.snapshots.len() < 2 {
        return Err(Error::Metric(format!(
            "run {} has {} snapshot(s); a snapshot ensemble needs at least 2 (train with a cyclic schedule)",
            run.run_id,
            run.snapshots.len()
        )));
    }
    Ok(())
}

/// Mean over the run's snapshot predictions.
pub fn snapshot_ensemble_predict(run: &RunRecord, averaging: Averaging) -> Result<PredictionMatrix> {
    check_snapshots(run)?;
    let mut acc = MeanAccumulator::new(averaging);
    for s in &run.snapshots {
        acc.add(s.predictions.logits().clone());
    }
    acc.finish()
}

/// TTA on every snapshot, averaged jointly over the snapshot × view grid.
pub fn combine(run: &RunRecord, images: &Tensor, spec: &TtaSpec, averaging: Averaging) -> Result<PredictionMatrix> {
    check_snapshots(run)?;
    let members: Vec<&Params> = run.snapshots.iter().map(|s| &s.params).collect();
    predict_views(&run.model, &members, images, spec, averaging)
}
