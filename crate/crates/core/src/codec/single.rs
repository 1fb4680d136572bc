use crate::bits::{iter_word_ones, BitGrid};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Single-level bitmap encoding: one bit per element, nonzero values packed in
/// row-major scan order, and the index of each row's first value.
#[derive(Clone, Debug, PartialEq)]
pub struct BitmapMatrix {
    bitmap: BitGrid,
    values: Vec<f32>,
    row_offsets: Vec<u32>,
}

impl BitmapMatrix {
    /// Encode a dense matrix. Exact zeros (of either sign) are dropped.
    pub fn encode(dense: &DenseMatrix) -> Result<Self> {
        if dense.is_empty() {
            return Err(Error::EmptyInput("bitmap encode of a zero-sized matrix"));
        }
        let mut bitmap = BitGrid::new(dense.rows(), dense.cols());
        let mut values = Vec::new();
        let mut row_offsets = Vec::with_capacity(dense.rows());
        for r in 0..dense.rows() {
            row_offsets.push(values.len() as u32);
            for (c, &v) in dense.row(r).iter().enumerate() {
                if v != 0.0 {
                    bitmap.set(r, c, true);
                    values.push(v);
                }
            }
        }
        Ok(Self {
            bitmap,
            values,
            row_offsets,
        })
    }

    /// Assemble from raw fields, checking every structural invariant.
    pub fn from_parts(bitmap: BitGrid, values: Vec<f32>, row_offsets: Vec<u32>) -> Result<Self> {
        let m = Self {
            bitmap,
            values,
            row_offsets,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let rows = self.bitmap.rows();
        if self.row_offsets.len() != rows {
            return Err(Error::CorruptEncoding(format!(
                "{} row offsets for {rows} rows",
                self.row_offsets.len()
            )));
        }
        if self.bitmap.count_ones() != self.values.len() {
            return Err(Error::CorruptEncoding(format!(
                "bitmap has {} set bits but {} values are stored",
                self.bitmap.count_ones(),
                self.values.len()
            )));
        }
        let mut expected = 0u32;
        for r in 0..rows {
            if self.row_offsets[r] != expected {
                return Err(Error::CorruptEncoding(format!(
                    "row {r} offset is {}, popcount prefix is {expected}",
                    self.row_offsets[r]
                )));
            }
            expected += self.bitmap.row_count_ones(r) as u32;
        }
        if self.values.contains(&0.0) {
            return Err(Error::CorruptEncoding("stored value is zero".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.bitmap.rows()
    }

    pub fn cols(&self) -> usize {
        self.bitmap.cols()
    }

    pub fn bitmap(&self) -> &BitGrid {
        &self.bitmap
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row_offsets(&self) -> &[u32] {
        &self.row_offsets
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Packed values of one row.
    pub fn row_values(&self, row: usize) -> &[f32] {
        let start = self.row_offsets[row] as usize;
        let end = self
            .row_offsets
            .get(row + 1)
            .map_or(self.values.len(), |&o| o as usize);
        &self.values[start..end]
    }

    pub fn decode(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows(), self.cols());
        for r in 0..self.rows() {
            let vals = self.row_values(r);
            for (v, c) in vals.iter().zip(iter_word_ones(self.bitmap.row_words(r))) {
                out.set(r, c, *v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_layout() {
        let d = DenseMatrix::new(1, 4, vec![0.0, 2.0, 0.0, 3.0]).unwrap();
        let b = BitmapMatrix::encode(&d).unwrap();
        assert_eq!(b.bitmap().row_words(0), &[0b1010]);
        assert_eq!(b.values(), &[2.0, 3.0]);
        assert_eq!(b.row_offsets(), &[0]);
        assert_eq!(b.decode(), d);
    }

    #[test]
    fn empty_rows_keep_offsets() {
        let d = DenseMatrix::new(3, 2, vec![1.0, 0.0, 0.0, 0.0, 0.0, 4.0]).unwrap();
        let b = BitmapMatrix::encode(&d).unwrap();
        assert_eq!(b.row_offsets(), &[0, 1, 1]);
        assert_eq!(b.row_values(1), &[] as &[f32]);
        assert_eq!(b.row_values(2), &[4.0]);
    }

    #[test]
    fn rejects_empty_and_corrupt() {
        assert!(matches!(
            BitmapMatrix::encode(&DenseMatrix::zeros(0, 3)),
            Err(Error::EmptyInput(_))
        ));
        let mut bits = BitGrid::new(2, 2);
        bits.set(0, 0, true);
        bits.set(1, 1, true);
        assert!(matches!(
            BitmapMatrix::from_parts(bits.clone(), vec![1.0], vec![0, 1]),
            Err(Error::CorruptEncoding(_))
        ));
        assert!(matches!(
            BitmapMatrix::from_parts(bits.clone(), vec![1.0, 2.0], vec![0, 0]),
            Err(Error::CorruptEncoding(_))
        ));
        assert!(BitmapMatrix::from_parts(bits, vec![1.0, 2.0], vec![0, 1]).is_ok());
    }
}
