use crate::error::{Error, Result};

/// Row-major `f32` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|v| **v != 0.0).count()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// `‖self − reference‖_F / ‖reference‖_F`, or the absolute norm when the
    /// reference is all zeros.
    pub fn relative_frobenius_error(&self, reference: &DenseMatrix) -> Result<f64> {
        if self.rows != reference.rows || self.cols != reference.cols {
            return Err(Error::Shape(format!(
                "comparing {}x{} against {}x{}",
                self.rows, self.cols, reference.rows, reference.cols
            )));
        }
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for (a, b) in self.data.iter().zip(&reference.data) {
            let d = *a as f64 - *b as f64;
            diff += d * d;
            norm += (*b as f64) * (*b as f64);
        }
        Ok(if norm == 0.0 {
            diff.sqrt()
        } else {
            (diff / norm).sqrt()
        })
    }
}

/// Round an `f32` to the nearest IEEE half-precision value (ties to even) and
/// widen it back. Overflow saturates to infinity.
pub fn round_through_f16(x: f32) -> f32 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    let ax = (x as f64).abs();
    if ax >= 65520.0 {
        return f32::INFINITY.copysign(x);
    }
    let min_normal = 2f64.powi(-14);
    let quantum = if ax < min_normal {
        2f64.powi(-24)
    } else {
        2f64.powi(ax.log2().floor() as i32 - 10)
    };
    let q = (ax / quantum).round_ties_even() * quantum;
    (q as f32).copysign(x)
}
