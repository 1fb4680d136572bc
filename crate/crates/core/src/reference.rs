//! Naive dense references used as oracles.

use crate::error::{Error, Result};
use crate::im2col::{ConvShape, FeatureMap, Filters};
use crate::matrix::DenseMatrix;

/// Triple-loop `A × B + C`, accumulated in f64.
pub fn gemm(a: &DenseMatrix, b: &DenseMatrix, c: Option<&DenseMatrix>) -> Result<DenseMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "inner dimensions differ: {}x{} by {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if let Some(c) = c {
        if (c.rows(), c.cols()) != (a.rows(), b.cols()) {
            return Err(Error::Shape("bias shape differs from the product".into()));
        }
    }
    Ok(DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        let mut s = c.map_or(0.0, |c| c.get(i, j) as f64);
        for k in 0..a.cols() {
            s += a.get(i, k) as f64 * b.get(k, j) as f64;
        }
        s as f32
    }))
}

/// Direct valid convolution; output row `ho * Wo + wo`, column `n`.
pub fn conv2d(map: &FeatureMap, filters: &Filters, shape: &ConvShape) -> Result<DenseMatrix> {
    let (n, kh, kw, c) = filters.dims();
    if (map.height(), map.width(), map.channels()) != (shape.height(), shape.width(), shape.channels())
        || (n, kh, kw, c) != (shape.filters(), shape.kernel_h(), shape.kernel_w(), shape.channels())
    {
        return Err(Error::Shape("map or filters disagree with the conv shape".into()));
    }
    let (ho_n, wo_n, s) = (shape.out_h(), shape.out_w(), shape.stride());
    Ok(DenseMatrix::from_fn(ho_n * wo_n, n, |row, f| {
        let (ho, wo) = (row / wo_n, row % wo_n);
        let mut acc = 0.0f64;
        for y in 0..kh {
            for x in 0..kw {
                for ch in 0..c {
                    acc += map.get(ho * s + y, wo * s + x, ch) as f64 * filters.get(f, y, x, ch) as f64;
                }
            }
        }
        acc as f32
    }))
}
