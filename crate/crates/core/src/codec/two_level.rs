use super::condense::{CondensedLane, QuantumLevels, Side, MAX_LANE};
use crate::bits::BitGrid;
use crate::error::{Error, Result};
use crate::matrix::{round_through_f16, DenseMatrix};

/// Packing order of the values inside each tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueOrder {
    RowMajor,
    ColumnMajor,
}

impl ValueOrder {
    /// Column-major for A-side operands (lanes are columns), row-major for B-side.
    pub fn for_side(side: Side) -> Self {
        match side {
            Side::A => ValueOrder::ColumnMajor,
            Side::B => ValueOrder::RowMajor,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EncodeOptions {
    /// Round every value through half precision before storing it. Values that
    /// underflow to zero are dropped.
    pub round_fp16: bool,
}

/// Element bitmap and packed values of one nonempty tile.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTile {
    bitmap: BitGrid,
    values: Vec<f32>,
}

impl EncodedTile {
    pub fn new(bitmap: BitGrid, values: Vec<f32>) -> Self {
        Self { bitmap, values }
    }

    pub fn bitmap(&self) -> &BitGrid {
        &self.bitmap
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Set positions in the given storage order.
    fn positions(&self, order: ValueOrder) -> Vec<(usize, usize)> {
        match order {
            ValueOrder::RowMajor => self.bitmap.iter_ones().collect(),
            ValueOrder::ColumnMajor => {
                let mut out = Vec::with_capacity(self.values.len());
                for c in 0..self.bitmap.cols() {
                    for r in 0..self.bitmap.rows() {
                        if self.bitmap.get(r, c) {
                            out.push((r, c));
                        }
                    }
                }
                out
            }
        }
    }

    /// Nonzeros of each lane in position order, with their lane bitmaps.
    fn raw_lanes(&self, side: Side, order: ValueOrder) -> Vec<(u32, Vec<f32>)> {
        let lanes = match side {
            Side::A => self.bitmap.cols(),
            Side::B => self.bitmap.rows(),
        };
        let mut out = vec![(0u32, Vec::new()); lanes];
        for ((r, c), v) in self.positions(order).into_iter().zip(&self.values) {
            let (lane, pos) = match side {
                Side::A => (c, r),
                Side::B => (r, c),
            };
            out[lane].0 |= 1 << pos;
            out[lane].1.push(*v);
        }
        out
    }

    /// Condensed lanes straight from the encoding, without a dense detour.
    pub fn condensed_lanes(
        &self,
        side: Side,
        order: ValueOrder,
        levels: &QuantumLevels,
    ) -> Result<Vec<CondensedLane>> {
        self.raw_lanes(side, order)
            .into_iter()
            .map(|(bits, vals)| CondensedLane::new(bits, vals, levels))
            .collect()
    }

    /// Full-length lanes, zeros included, for uncondensed execution.
    pub fn dense_lanes(&self, side: Side, order: ValueOrder) -> Vec<CondensedLane> {
        let lane_len = match side {
            Side::A => self.bitmap.rows(),
            Side::B => self.bitmap.cols(),
        };
        self.raw_lanes(side, order)
            .into_iter()
            .map(|(bits, vals)| {
                let mut full = vec![0.0; lane_len];
                for (pos, v) in crate::bits::lane_ones(bits).zip(vals) {
                    full[pos] = v;
                }
                CondensedLane::dense(full)
            })
            .collect()
    }
}

/// Tiled bitmap encoding: a warp bitmap with one bit per tile, then an element
/// bitmap and packed values for every tile whose warp bit is set.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelBitmapMatrix {
    rows: usize,
    cols: usize,
    tile_rows: usize,
    tile_cols: usize,
    warp_bitmap: BitGrid,
    tiles: Vec<EncodedTile>,
    order: ValueOrder,
    // tile index per grid cell, usize::MAX when the warp bit is clear
    slots: Vec<usize>,
}

impl TwoLevelBitmapMatrix {
    pub fn encode(
        dense: &DenseMatrix,
        tile_rows: usize,
        tile_cols: usize,
        order: ValueOrder,
    ) -> Result<Self> {
        Self::encode_with(dense, tile_rows, tile_cols, order, EncodeOptions::default())
    }

    /// 32×32 tiles packed column-major, for left-hand operands.
    pub fn encode_lhs(dense: &DenseMatrix) -> Result<Self> {
        Self::encode(dense, MAX_LANE, MAX_LANE, ValueOrder::ColumnMajor)
    }

    /// 32×32 tiles packed row-major, for right-hand operands.
    pub fn encode_rhs(dense: &DenseMatrix) -> Result<Self> {
        Self::encode(dense, MAX_LANE, MAX_LANE, ValueOrder::RowMajor)
    }

    pub fn encode_with(
        dense: &DenseMatrix,
        tile_rows: usize,
        tile_cols: usize,
        order: ValueOrder,
        opts: EncodeOptions,
    ) -> Result<Self> {
        if dense.is_empty() {
            return Err(Error::EmptyInput("two-level encode of a zero-sized matrix"));
        }
        if tile_rows == 0 || tile_cols == 0 {
            return Err(Error::Config("tile dimensions must be at least 1".into()));
        }
        let grid_rows = dense.rows().div_ceil(tile_rows);
        let grid_cols = dense.cols().div_ceil(tile_cols);
        let mut warp_bitmap = BitGrid::new(grid_rows, grid_cols);
        let mut tiles = Vec::new();
        for gr in 0..grid_rows {
            for gc in 0..grid_cols {
                let mut bitmap = BitGrid::new(tile_rows, tile_cols);
                let at = |r: usize, c: usize| {
                    let (dr, dc) = (gr * tile_rows + r, gc * tile_cols + c);
                    if dr < dense.rows() && dc < dense.cols() {
                        let v = dense.get(dr, dc);
                        if opts.round_fp16 {
                            round_through_f16(v)
                        } else {
                            v
                        }
                    } else {
                        0.0
                    }
                };
                let mut values = Vec::new();
                let mut visit = |r: usize, c: usize| {
                    let v = at(r, c);
                    if v != 0.0 {
                        bitmap.set(r, c, true);
                        values.push(v);
                    }
                };
                match order {
                    ValueOrder::RowMajor => {
                        for r in 0..tile_rows {
                            for c in 0..tile_cols {
                                visit(r, c);
                            }
                        }
                    }
                    ValueOrder::ColumnMajor => {
                        for c in 0..tile_cols {
                            for r in 0..tile_rows {
                                visit(r, c);
                            }
                        }
                    }
                }
                if !values.is_empty() {
                    warp_bitmap.set(gr, gc, true);
                    tiles.push(EncodedTile { bitmap, values });
                }
            }
        }
        Self::from_parts(
            dense.rows(),
            dense.cols(),
            tile_rows,
            tile_cols,
            order,
            warp_bitmap,
            tiles,
        )
    }

    /// Assemble from raw fields. Only the grid geometry is checked here;
    /// [`validate`](Self::validate) checks the payload.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        tile_rows: usize,
        tile_cols: usize,
        order: ValueOrder,
        warp_bitmap: BitGrid,
        tiles: Vec<EncodedTile>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyInput("two-level matrix with zero dimension"));
        }
        if tile_rows == 0 || tile_cols == 0 {
            return Err(Error::Config("tile dimensions must be at least 1".into()));
        }
        let (grid_rows, grid_cols) = (rows.div_ceil(tile_rows), cols.div_ceil(tile_cols));
        if warp_bitmap.rows() != grid_rows || warp_bitmap.cols() != grid_cols {
            return Err(Error::CorruptEncoding(format!(
                "warp bitmap is {}x{}, grid is {grid_rows}x{grid_cols}",
                warp_bitmap.rows(),
                warp_bitmap.cols()
            )));
        }
        let mut slots = vec![usize::MAX; grid_rows * grid_cols];
        for (next, (gr, gc)) in warp_bitmap.iter_ones().enumerate() {
            slots[gr * grid_cols + gc] = next;
        }
        Ok(Self {
            rows,
            cols,
            tile_rows,
            tile_cols,
            warp_bitmap,
            tiles,
            order,
            slots,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let set = self.warp_bitmap.count_ones();
        if set != self.tiles.len() {
            return Err(Error::CorruptEncoding(format!(
                "{set} warp bits set but {} tiles stored",
                self.tiles.len()
            )));
        }
        for (i, t) in self.tiles.iter().enumerate() {
            if t.bitmap.rows() != self.tile_rows || t.bitmap.cols() != self.tile_cols {
                return Err(Error::CorruptEncoding(format!("tile {i} has wrong bitmap shape")));
            }
            let ones = t.bitmap.count_ones();
            if ones != t.values.len() {
                return Err(Error::CorruptEncoding(format!(
                    "tile {i}: {ones} element bits but {} values",
                    t.values.len()
                )));
            }
            if ones == 0 {
                return Err(Error::CorruptEncoding(format!(
                    "tile {i} has its warp bit set but stores nothing"
                )));
            }
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<DenseMatrix> {
        self.validate()?;
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (gr, gc) in self.warp_bitmap.iter_ones() {
            let tile = &self.tiles[self.slots[gr * self.grid_cols() + gc]];
            for ((r, c), v) in tile.positions(self.order).into_iter().zip(&tile.values) {
                let (dr, dc) = (gr * self.tile_rows + r, gc * self.tile_cols + c);
                if dr < self.rows && dc < self.cols {
                    out.set(dr, dc, *v);
                } else {
                    return Err(Error::CorruptEncoding(format!(
                        "value at ({dr}, {dc}) lies in the padding"
                    )));
                }
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile_rows(&self) -> usize {
        self.tile_rows
    }

    pub fn tile_cols(&self) -> usize {
        self.tile_cols
    }

    pub fn grid_rows(&self) -> usize {
        self.warp_bitmap.rows()
    }

    pub fn grid_cols(&self) -> usize {
        self.warp_bitmap.cols()
    }

    pub fn order(&self) -> ValueOrder {
        self.order
    }

    pub fn warp_bitmap(&self) -> &BitGrid {
        &self.warp_bitmap
    }

    /// Stored tiles in row-major grid order.
    pub fn tiles(&self) -> &[EncodedTile] {
        &self.tiles
    }

    pub fn tile(&self, grid_row: usize, grid_col: usize) -> Option<&EncodedTile> {
        let slot = self.slots[grid_row * self.grid_cols() + grid_col];
        self.tiles.get(slot)
    }

    pub fn nnz(&self) -> usize {
        self.tiles.iter().map(|t| t.values.len()).sum()
    }

    /// Fraction of tiles whose warp bit is clear.
    pub fn empty_tile_fraction(&self) -> f64 {
        let total = self.grid_rows() * self.grid_cols();
        1.0 - self.warp_bitmap.count_ones() as f64 / total as f64
    }

    /// Same matrix with every tile repacked in `order`.
    pub fn with_order(&self, order: ValueOrder) -> Self {
        if order == self.order {
            return self.clone();
        }
        let tiles = self
            .tiles
            .iter()
            .map(|t| {
                let mut lookup = std::collections::HashMap::with_capacity(t.values.len());
                for (p, v) in t.positions(self.order).into_iter().zip(&t.values) {
                    lookup.insert(p, *v);
                }
                let values = t.positions(order).iter().map(|p| lookup[p]).collect();
                EncodedTile {
                    bitmap: t.bitmap.clone(),
                    values,
                }
            })
            .collect();
        Self {
            tiles,
            order,
            ..self.clone()
        }
    }
}
