//! Outer-product SpGEMM on bitmap encodings.
//!
//! Each reduction step `k` takes the `k`-th condensed column lane of an A tile
//! and the `k`-th condensed row lane of a B tile and runs three phases:
//! a 1-bit outer product of the lane bitmaps, a dense outer product of the
//! condensed values, and a merge that scatters the value block into the
//! resident accumulator at the positions named by the product bitmap.

pub(crate) mod device;
mod trace;

pub use device::{device_spgemm, device_spgemm_with, DeviceConfig, DeviceRun, LaneMode};
pub use trace::{StepRecord, StepTrace, TraceSummary};

use crate::bits::lane_ones;
use crate::codec::{CondensedLane, A_STEP, B_STEP, MAX_LANE};
use crate::error::{Error, Result};

/// Number of `8×16×1` outer-product instructions covering padded lanes of
/// `a_len` and `b_len` values.
pub fn ohmma_substeps(a_len: usize, b_len: usize) -> usize {
    a_len.div_ceil(A_STEP) * b_len.div_ceil(B_STEP)
}

/// 1-bit outer product of two lane bitmaps. Row `r` is `b_bits` when bit `r`
/// of `a_bits` is set, otherwise zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProductBitmap {
    rows: [u32; MAX_LANE],
}

impl ProductBitmap {
    pub fn from_rows(rows: [u32; MAX_LANE]) -> Self {
        Self { rows }
    }

    pub fn rows(&self) -> &[u32; MAX_LANE] {
        &self.rows
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        (self.rows[row] >> col) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum()
    }

    /// Set positions, row-major.
    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, &bits)| lane_ones(bits).map(move |c| (r, c)))
    }

    /// The `(a_bits, b_bits)` pair this bitmap is the outer product of, or
    /// `None` when it is not a rank-1 pattern.
    pub fn factors(&self) -> Option<(u32, u32)> {
        let mut a_bits = 0u32;
        let mut b_bits = 0u32;
        for (r, &row) in self.rows.iter().enumerate() {
            if row == 0 {
                continue;
            }
            if a_bits != 0 && row != b_bits {
                return None;
            }
            b_bits = row;
            a_bits |= 1 << r;
        }
        Some((a_bits, b_bits))
    }
}

pub fn multiply_bitmap(a_bits: u32, b_bits: u32) -> ProductBitmap {
    let mut rows = [0u32; MAX_LANE];
    for r in lane_ones(a_bits) {
        rows[r] = b_bits;
    }
    ProductBitmap { rows }
}

/// Dense `k_a × k_b` block of condensed products.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueBlock {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ValueBlock {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} block with {} values", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }
}

pub fn multiply_value(a_lane: &[f32], b_lane: &[f32]) -> ValueBlock {
    let mut data = Vec::with_capacity(a_lane.len() * b_lane.len());
    for &a in a_lane {
        data.extend(b_lane.iter().map(|&b| a * b));
    }
    ValueBlock {
        rows: a_lane.len(),
        cols: b_lane.len(),
        data,
    }
}

/// One outer-product step: the product bitmap plus the condensed value block
/// (padding included).
#[derive(Clone, Debug, PartialEq)]
pub struct PartialProduct {
    bitmap: ProductBitmap,
    values: ValueBlock,
}

impl PartialProduct {
    pub fn new(bitmap: ProductBitmap, values: ValueBlock) -> Self {
        Self { bitmap, values }
    }

    pub fn from_lanes(a: &CondensedLane, b: &CondensedLane) -> Self {
        Self {
            bitmap: multiply_bitmap(a.bits(), b.bits()),
            values: multiply_value(a.values(), b.values()),
        }
    }

    pub fn bitmap(&self) -> &ProductBitmap {
        &self.bitmap
    }

    pub fn values(&self) -> &ValueBlock {
        &self.values
    }

    /// Padded lane lengths `(k_a, k_b)`.
    pub fn padded_dims(&self) -> (usize, usize) {
        (self.values.rows, self.values.cols)
    }

    /// Rank-1 factors checked against the value block.
    pub fn checked_factors(&self) -> Result<(u32, u32)> {
        let (a_bits, b_bits) = self
            .bitmap
            .factors()
            .ok_or_else(|| Error::CorruptPartial("product bitmap is not an outer product".into()))?;
        let (ca, cb) = (a_bits.count_ones() as usize, b_bits.count_ones() as usize);
        if ca > self.values.rows || cb > self.values.cols {
            return Err(Error::CorruptPartial(format!(
                "bitmap selects {ca}x{cb} products but only {}x{} values are present",
                self.values.rows, self.values.cols
            )));
        }
        Ok((a_bits, b_bits))
    }
}

/// Resident output block of one warp, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Accumulator {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl Accumulator {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// An accumulator preloaded with a bias block.
    pub fn with_bias(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}x{cols} accumulator with {} values", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }
}

/// Gather, accumulate and scatter one partial product into `acc`. Set bits are
/// visited in row-major order and paired with the condensed values they index.
pub fn merge(partial: &PartialProduct, acc: &mut Accumulator) -> Result<()> {
    let (a_bits, b_bits) = partial.checked_factors()?;
    let high_row = 32 - a_bits.leading_zeros() as usize;
    let high_col = 32 - b_bits.leading_zeros() as usize;
    if high_row > acc.rows || high_col > acc.cols {
        return Err(Error::CorruptPartial(format!(
            "product bitmap reaches ({high_row}, {high_col}) outside a {}x{} accumulator",
            acc.rows, acc.cols
        )));
    }
    let vals = &partial.values;
    for (i, r) in lane_ones(a_bits).enumerate() {
        let row = &mut acc.data[r * acc.cols..(r + 1) * acc.cols];
        let src = &vals.data[i * vals.cols..];
        for (j, c) in lane_ones(b_bits).enumerate() {
            row[c] += src[j];
        }
    }
    Ok(())
}

/// Receives every executed partial product of a warp tile, in merge order.
pub trait PartialObserver {
    fn observe(&mut self, k: usize, partial: &PartialProduct);
}

impl PartialObserver for () {
    fn observe(&mut self, _k: usize, _partial: &PartialProduct) {}
}

/// Runs the reduction steps of one warp tile. `k_base` is the global index of
/// the first lane pair.
pub(crate) fn run_sets<O: PartialObserver>(
    a_lanes: &[CondensedLane],
    b_lanes: &[CondensedLane],
    acc: &mut Accumulator,
    tile: (usize, usize),
    k_base: usize,
    trace: &mut StepTrace,
    observer: &mut O,
) -> Result<()> {
    let baseline = ohmma_substeps(acc.rows, acc.cols);
    for (k, (a, b)) in a_lanes.iter().zip(b_lanes).enumerate() {
        let executed = ohmma_substeps(a.padded_len(), b.padded_len());
        trace.push(StepRecord {
            tile_row: tile.0,
            tile_col: tile.1,
            k_index: k_base + k,
            executed_substeps: executed,
            baseline_substeps: baseline,
            skipped_by_warp_bit: false,
        });
        if executed == 0 {
            continue;
        }
        let partial = PartialProduct::from_lanes(a, b);
        merge(&partial, acc)?;
        observer.observe(k_base + k, &partial);
    }
    Ok(())
}

/// Warp-level SpGEMM over `K` lane pairs. The accumulator's shape fixes the
/// dense baseline of each step.
pub fn warp_spgemm(
    a_lanes: &[CondensedLane],
    b_lanes: &[CondensedLane],
    acc: &mut Accumulator,
) -> Result<StepTrace> {
    warp_spgemm_observed(a_lanes, b_lanes, acc, &mut ())
}

pub fn warp_spgemm_observed<O: PartialObserver>(
    a_lanes: &[CondensedLane],
    b_lanes: &[CondensedLane],
    acc: &mut Accumulator,
    observer: &mut O,
) -> Result<StepTrace> {
    if a_lanes.len() != b_lanes.len() {
        return Err(Error::Shape(format!(
            "{} A lanes against {} B lanes",
            a_lanes.len(),
            b_lanes.len()
        )));
    }
    if acc.rows > MAX_LANE || acc.cols > MAX_LANE {
        return Err(Error::Shape(format!("{}x{} warp tile exceeds 32x32", acc.rows, acc.cols)));
    }
    let mut trace = StepTrace::new(acc.rows, acc.cols, true);
    trace.add_tiles(1);
    run_sets(a_lanes, b_lanes, acc, (0, 0), 0, &mut trace, observer)?;
    Ok(trace)
}
