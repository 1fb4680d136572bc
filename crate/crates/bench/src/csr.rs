//! CSR reference stub for the im2col read comparison.
//!
//! Each channel is stored as CSR. Lowering one `(kh, kw, c)` column for one
//! output row reads the two row pointers, scans column indices from the row
//! start until past the window, and reads each value the window keeps.

use dstc::im2col::{ConvShape, FeatureMap};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CsrOps {
    pub row_ptr_reads: u64,
    pub col_idx_reads: u64,
    pub value_reads: u64,
}

impl CsrOps {
    pub fn data_dependent_reads(&self) -> u64 {
        self.row_ptr_reads + self.col_idx_reads + self.value_reads
    }
}

pub struct CsrChannel {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f32>,
}

impl CsrChannel {
    pub fn from_map(map: &FeatureMap, c: usize) -> Self {
        let mut row_ptr = vec![0];
        let (mut col_idx, mut values) = (Vec::new(), Vec::new());
        for h in 0..map.height() {
            for w in 0..map.width() {
                let v = map.get(h, w, c);
                if v != 0.0 {
                    col_idx.push(w);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { row_ptr, col_idx, values }
    }
}

/// Lower `map` through CSR, returning the nonzeros of each lowered column in
/// output-row order alongside the read counts.
pub fn csr_im2col(map: &FeatureMap, shape: &ConvShape) -> (Vec<Vec<f32>>, CsrOps) {
    let chans: Vec<CsrChannel> = (0..map.channels()).map(|c| CsrChannel::from_map(map, c)).collect();
    let s = shape.stride();
    let mut ops = CsrOps::default();
    let mut columns = Vec::new();
    for kh in 0..shape.kernel_h() {
        for kw in 0..shape.kernel_w() {
            for ch in &chans {
                let mut col = Vec::new();
                let last = kw + s * (shape.out_w() - 1);
                for ho in 0..shape.out_h() {
                    let r = ho * s + kh;
                    let (start, end) = (ch.row_ptr[r], ch.row_ptr[r + 1]);
                    ops.row_ptr_reads += 2;
                    for i in start..end {
                        ops.col_idx_reads += 1;
                        let w = ch.col_idx[i];
                        if w > last {
                            break;
                        }
                        if w >= kw && (w - kw) % s == 0 {
                            ops.value_reads += 1;
                            col.push(ch.values[i]);
                        }
                    }
                }
                columns.push(col);
            }
        }
    }
    (columns, ops)
}
