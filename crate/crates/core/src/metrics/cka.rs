use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Column-centered binary64 copy of an `n × p` activation matrix.
#[derive(Clone, Debug)]
pub(crate) struct Centered {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    /// `‖XᵀX‖_F` of the centered matrix.
    self_norm: f64,
}

impl Centered {
    pub(crate) fn new(x: &Tensor) -> Result<Self> {
        let &[rows, cols] = x.shape() else {
            return Err(Error::Metric(format!(
                "CKA expects a 2-D activation matrix, got {:?}",
                x.shape()
            )));
        };
        if rows < 2 {
            return Err(Error::Metric("CKA needs at least 2 examples".into()));
        }
        let mut data: Vec<f64> = x.data().iter().map(|&v| v as f64).collect();
        let mut mean = vec![0.0; cols];
        for row in data.chunks_exact(cols) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        for row in data.chunks_exact_mut(cols) {
            row.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        let mut c = Self {
            rows,
            cols,
            data,
            self_norm: 0.0,
        };
        c.self_norm = cross_frobenius_sq(&c, &c).sqrt();
        if c.self_norm == 0.0 {
            return Err(Error::Metric("CKA undefined for a zero-variance matrix".into()));
        }
        Ok(c)
    }
}

/// `‖Yᵀ X‖²_F` for centered matrices over the same rows.
fn cross_frobenius_sq(x: &Centered, y: &Centered) -> f64 {
    let (p, q) = (x.cols, y.cols);
    let mut m = vec![0.0f64; q * p];
    for (xr, yr) in x.data.chunks_exact(p).zip(y.data.chunks_exact(q)) {
        for (&yv, mrow) in yr.iter().zip(m.chunks_exact_mut(p)) {
            if yv == 0.0 {
                continue;
            }
            mrow.iter_mut().zip(xr).for_each(|(a, &xv)| *a += yv * xv);
        }
    }
    m.iter().map(|v| v * v).sum()
}

pub(crate) fn cka_centered(x: &Centered, y: &Centered) -> Result<f64> {
    if x.rows != y.rows {
        return Err(Error::ShapeMismatch {
            op: "linear_cka",
            left: vec![x.rows, x.cols],
            right: vec![y.rows, y.cols],
        });
    }
    Ok(cross_frobenius_sq(x, y) / (x.self_norm * y.self_norm))
}

/// Linear centered kernel alignment:
/// `‖Yᵀ X‖²_F / (‖Xᵀ X‖_F · ‖Yᵀ Y‖_F)` after column-centering both matrices.
pub fn linear_cka(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(Error::ShapeMismatch {
            op: "linear_cka",
            left: x.shape().to_vec(),
            right: y.shape().to_vec(),
        });
    }
    cka_centered(&Centered::new(x)?, &Centered::new(y)?)
}
