//! Fixed-order kernels. Every output element is accumulated from `0.0` by
//! adding products in ascending order of the contraction index, so results
//! are bit-identical to a naive triple loop and independent of threading.

use crate::error::{Error, Result};

use super::Tensor;

/// `c (m×n) = a (m×k) · b (k×n)`.
///
/// Zero entries of `a` are skipped. For finite `b` this is exact: adding
/// `±0.0` to an accumulator that started at `+0.0` never changes its bits.
pub(crate) fn gemm(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0f32; m * n];
    for (a_row, c_row) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&av, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            if av == 0.0 {
                continue;
            }
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// `c (m×n) = aᵀ · b` with `a` stored `k×m` and `b` stored `k×n`.
pub(crate) fn gemm_at_b(a: &[f32], b: &[f32], k: usize, m: usize, n: usize) -> Vec<f32> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0f32; m * n];
    for (a_row, b_row) in a.chunks_exact(m).zip(b.chunks_exact(n)) {
        for (&av, c_row) in a_row.iter().zip(c.chunks_exact_mut(n)) {
            if av == 0.0 {
                continue;
            }
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
    c
}

pub(crate) fn transpose_slice(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut t = vec![0.0f32; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = a[r * cols + c];
        }
    }
    t
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::ShapeMismatch {
            op,
            left: t.shape().to_vec(),
            right: vec![],
        }),
    }
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = dims2(a, "matmul")?;
    let (k2, n) = dims2(b, "matmul")?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Tensor::new(vec![m, n], gemm(a.data(), b.data(), m, k, n))
}

/// `aᵀ · b` for `a: k×m`, `b: k×n`.
pub fn matmul_at_b(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = dims2(a, "matmul_at_b")?;
    let (k2, n) = dims2(b, "matmul_at_b")?;
    if k != k2 {
        return Err(Error::ShapeMismatch {
            op: "matmul_at_b",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Tensor::new(vec![m, n], gemm_at_b(a.data(), b.data(), k, m, n))
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (r, c) = dims2(a, "transpose")?;
    Tensor::new(vec![c, r], transpose_slice(a.data(), r, c))
}

/// Adds `bias[j]` to every row of a row-major `rows × bias.len()` buffer.
pub fn add_bias_rows(z: &mut [f32], bias: &[f32]) {
    for row in z.chunks_exact_mut(bias.len()) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Stride-1 square-kernel convolution geometry with symmetric zero padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl Conv2dGeometry {
    pub fn out_height(&self) -> usize {
        self.height + 2 * self.pad + 1 - self.kernel
    }

    pub fn out_width(&self) -> usize {
        self.width + 2 * self.pad + 1 - self.kernel
    }

    /// Rows of the unfolded patch matrix: `in_channels · kernel²`.
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_positions(&self) -> usize {
        self.out_height() * self.out_width()
    }
}

/// Unfolds one `C×H×W` example into a `(C·K·K) × (OH·OW)` patch matrix,
/// rows ordered by (channel, ky, kx).
pub fn im2col(example: &[f32], g: &Conv2dGeometry) -> Vec<f32> {
    let (oh, ow) = (g.out_height(), g.out_width());
    let mut cols = vec![0.0f32; g.patch_len() * oh * ow];
    let mut r = 0;
    for c in 0..g.in_channels {
        let plane = &example[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let dst = &mut cols[r * oh * ow..(r + 1) * oh * ow];
                for y in 0..oh {
                    let sy = y as isize + ky as isize - g.pad as isize;
                    if sy < 0 || sy >= g.height as isize {
                        continue;
                    }
                    for x in 0..ow {
                        let sx = x as isize + kx as isize - g.pad as isize;
                        if sx >= 0 && sx < g.width as isize {
                            dst[y * ow + x] = plane[sy as usize * g.width + sx as usize];
                        }
                    }
                }
                r += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch-matrix gradients back onto a `C×H×W` buffer.
pub(crate) fn col2im(cols: &[f32], g: &Conv2dGeometry, out: &mut [f32]) {
    let (oh, ow) = (g.out_height(), g.out_width());
    let mut r = 0;
    for c in 0..g.in_channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let src = &cols[r * oh * ow..(r + 1) * oh * ow];
                for y in 0..oh {
                    let sy = y as isize + ky as isize - g.pad as isize;
                    if sy < 0 || sy >= g.height as isize {
                        continue;
                    }
                    for x in 0..ow {
                        let sx = x as isize + kx as isize - g.pad as isize;
                        if sx >= 0 && sx < g.width as isize {
                            plane[sy as usize * g.width + sx as usize] += src[y * ow + x];
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

/// Convolution of an `N×C×H×W` batch with `O×C×K×K` weights plus per-channel bias.
pub fn conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
    let (&[n, c, h, w], &[o, wc, k, k2]) = (input.shape(), weight.shape()) else {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: input.shape().to_vec(),
            right: weight.shape().to_vec(),
        });
    };
    if c != wc || k != k2 || bias.len() != o || h + 2 * pad < k || w + 2 * pad < k {
        return Err(Error::ShapeMismatch {
            op: "conv2d",
            left: input.shape().to_vec(),
            right: weight.shape().to_vec(),
        });
    }
    let g = Conv2dGeometry {
        in_channels: c,
        height: h,
        width: w,
        kernel: k,
        pad,
    };
    let p = g.out_positions();
    let mut out = Vec::with_capacity(n * o * p);
    for ex in input.data().chunks_exact(c * h * w) {
        let cols = im2col(ex, &g);
        let mut z = gemm(weight.data(), &cols, o, g.patch_len(), p);
        for (plane, &b) in z.chunks_exact_mut(p).zip(bias.data()) {
            for v in plane {
                *v += b;
            }
        }
        out.extend_from_slice(&z);
    }
    Tensor::new(vec![n, o, g.out_height(), g.out_width()], out)
}

/// Result of a 2×2, stride-2 max pool.
#[derive(Clone, Debug)]
pub struct PoolOutput {
    pub output: Tensor,
    /// Flat input index that produced each output element.
    pub argmax: Vec<usize>,
}

/// 2×2 max pool with stride 2 (trailing odd rows/columns dropped). Ties go to
/// the first element in row-major window order.
pub fn max_pool2d(input: &Tensor) -> Result<PoolOutput> {
    let &[n, c, h, w] = input.shape() else {
        return Err(Error::ShapeMismatch {
            op: "max_pool2d",
            left: input.shape().to_vec(),
            right: vec![],
        });
    };
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    let data = input.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for y in 0..oh {
            for x in 0..ow {
                let mut best = base + 2 * y * w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * x + dx;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(vec![n, c, oh, ow], out)?,
        argmax,
    })
}
