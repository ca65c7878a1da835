use serde::{Deserialize, Serialize};

use crate::numerics::{RngStream, Tensor};

/// Training-time augmentation: zero padding, random crop back to the
/// original size, random horizontal flip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    pub pad_pixels: usize,
    pub random_crop: bool,
    pub horizontal_flip: bool,
}

impl AugmentationSpec {
    pub const NONE: AugmentationSpec = AugmentationSpec {
        pad_pixels: 0,
        random_crop: false,
        horizontal_flip: false,
    };

    pub fn is_identity(&self) -> bool {
        !self.random_crop && !self.horizontal_flip
    }

    /// Uniform draws consumed per example.
    pub fn draws_per_example(&self) -> usize {
        2 * self.random_crop as usize + self.horizontal_flip as usize
    }
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self::NONE
    }
}

/// Copies the `h×w` window at (`dy`, `dx`) of the image zero-padded by `pad`.
pub(crate) fn shifted_crop(src: &[f32], dims: [usize; 3], pad: usize, dy: usize, dx: usize, dst: &mut [f32]) {
    let [c, h, w] = dims;
    dst.fill(0.0);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        let out = &mut dst[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            let sy = y as isize + dy as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = x as isize + dx as isize - pad as isize;
                if sx >= 0 && sx < w as isize {
                    out[y * w + x] = plane[sy as usize * w + sx as usize];
                }
            }
        }
    }
}

pub(crate) fn hflip_in_place(img: &mut [f32], dims: [usize; 3]) {
    let w = dims[2];
    for row in img.chunks_exact_mut(w) {
        row.reverse();
    }
}

/// Augments one `C×H×W` example in place, drawing from `stream`.
///
/// Consumes exactly [`AugmentationSpec::draws_per_example`] draws: crop row
/// offset, crop column offset, then the flip coin.
pub(crate) fn augment_slice(
    img: &mut [f32],
    dims: [usize; 3],
    spec: &AugmentationSpec,
    stream: &mut RngStream,
    scratch: &mut Vec<f32>,
) {
    if spec.random_crop {
        let span = 2 * spec.pad_pixels as u64 + 1;
        let dy = stream.below(span) as usize;
        let dx = stream.below(span) as usize;
        if !(dy == spec.pad_pixels && dx == spec.pad_pixels) {
            scratch.resize(img.len(), 0.0);
            shifted_crop(img, dims, spec.pad_pixels, dy, dx, scratch);
            img.copy_from_slice(scratch);
        }
    }
    if spec.horizontal_flip && stream.coin() {
        hflip_in_place(img, dims);
    }
}

/// Augments a single example tensor of shape `C×H×W` (or `1×C×H×W`).
pub fn augment(image: &Tensor, spec: &AugmentationSpec, stream: &mut RngStream) -> Tensor {
    let s = image.shape();
    let dims = [s[s.len() - 3], s[s.len() - 2], s[s.len() - 1]];
    let mut out = image.clone();
    let mut scratch = Vec::new();
    augment_slice(out.data_mut(), dims, spec, stream, &mut scratch);
    out
}

/// Horizontal mirror of a `C×H×W` example.
pub fn hflip(image: &Tensor) -> Tensor {
    let s = image.shape();
    let dims = [s[s.len() - 3], s[s.len() - 2], s[s.len() - 1]];
    let mut out = image.clone();
    hflip_in_place(out.data_mut(), dims);
    out
}
