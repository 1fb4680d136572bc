//! Outer-product-friendly im2col.
//!
//! The lowered feature map has one row per output position (`Ho×Wo` rows) and
//! one column per kernel tap `(kh, kw, c)`, flattened as
//! `(kh * Kw + kw) * C + c`. Columns are produced one at a time in ascending
//! index order: for each kernel row, a `1×B` window slides along the feature
//! map rows, one column per horizontal kernel offset.
//!
//! The sparse path works on bitmap-encoded maps and never builds the lowered
//! matrix. Each feature-map row involved in a column is held in a cursor that
//! is masked to extract the window bits, then shifted by one column; the bits
//! shifted out are accumulated and give the offset of the window's first
//! value inside the row's packed values.

use crate::bits::{count_ones_below, shift_out_one};
use crate::codec::BitmapMatrix;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Geometry of a valid (unpadded) 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvShape {
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    n: usize,
}

/// `B = (R − K + S) / S`, the number of values one feature-map row contributes
/// to a lowered column. Errors unless the division is exact and positive.
pub fn values_per_row(row_len: usize, kernel: usize, stride: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::Shape("stride must be at least 1".into()));
    }
    if kernel == 0 || kernel > row_len {
        return Err(Error::Shape(format!(
            "kernel width {kernel} does not fit a row of {row_len}"
        )));
    }
    let span = row_len - kernel + stride;
    if !span.is_multiple_of(stride) {
        return Err(Error::Shape(format!(
            "(R - K + S) / S = {span}/{stride} is not integral"
        )));
    }
    Ok(span / stride)
}

impl ConvShape {
    pub fn new(
        h: usize,
        w: usize,
        c: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        n: usize,
    ) -> Result<Self> {
        if h == 0 || w == 0 || c == 0 || n == 0 {
            return Err(Error::Shape(format!("zero dimension in {h}x{w}x{c} -> {n}")));
        }
        if kh == 0 || kh > h {
            return Err(Error::Shape(format!("kernel height {kh} does not fit a map of height {h}")));
        }
        values_per_row(w, kw, stride)?;
        Ok(Self {
            h,
            w,
            c,
            kh,
            kw,
            stride,
            n,
        })
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn kernel_h(&self) -> usize {
        self.kh
    }

    pub fn kernel_w(&self) -> usize {
        self.kw
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn filters(&self) -> usize {
        self.n
    }

    pub fn out_h(&self) -> usize {
        (self.h - self.kh) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.w - self.kw) / self.stride + 1
    }

    /// Lowered column index of kernel tap `(kh, kw, c)`.
    pub fn column_index(&self, kh: usize, kw: usize, c: usize) -> usize {
        (kh * self.kw + kw) * self.c + c
    }

    /// Inverse of [`column_index`](Self::column_index).
    pub fn column_tap(&self, col: usize) -> (usize, usize, usize) {
        let c = col % self.c;
        let t = col / self.c;
        (t / self.kw, t % self.kw, c)
    }
}

/// `(Ho×Wo, Kh×Kw×C)`.
pub fn lowered_dims(shape: &ConvShape) -> (usize, usize) {
    (shape.out_h() * shape.out_w(), shape.kh * shape.kw * shape.c)
}

/// `B` for the row-wise sliding window; equal to `Wo` for a valid shape.
pub fn values_per_column(shape: &ConvShape) -> usize {
    (shape.w - shape.kw + shape.stride) / shape.stride
}

/// Feature map stored height × width × channel, channel fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{height}x{width}x{channels} map needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_channels(channels: &[DenseMatrix]) -> Result<Self> {
        let first = channels.first().ok_or(Error::EmptyInput("feature map without channels"))?;
        let (h, w) = (first.rows(), first.cols());
        if channels.iter().any(|m| m.rows() != h || m.cols() != w) {
            return Err(Error::Shape("channels differ in size".into()));
        }
        let c = channels.len();
        let mut data = vec![0.0; h * w * c];
        for (ci, m) in channels.iter().enumerate() {
            for (i, v) in m.data().iter().enumerate() {
                data[i * c + ci] = *v;
            }
        }
        Self::new(h, w, c, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[(h * self.width + w) * self.channels + c]
    }

    pub fn channel(&self, c: usize) -> DenseMatrix {
        DenseMatrix::from_fn(self.height, self.width, |h, w| self.get(h, w, c))
    }

    pub fn write_dmat(&self, w: &mut impl std::io::Write) -> Result<()> {
        crate::codec::write_dmat(w, self.height, self.width, self.channels, &self.data)
    }

    pub fn read_dmat(r: &mut impl std::io::Read) -> Result<Self> {
        let (h, w, c, data) = crate::codec::read_dmat(r)?;
        Self::new(h, w, c, data)
    }

    /// Bitmap-encode every channel.
    pub fn encode_channels(&self) -> Result<Vec<BitmapMatrix>> {
        (0..self.channels)
            .map(|c| BitmapMatrix::encode(&self.channel(c)))
            .collect()
    }
}

/// Order in which lowered columns were produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmissionOrder {
    /// One full column at a time, ascending column index.
    ColumnMajor,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LoweredData {
    Dense(DenseMatrix),
    Bitmap(BitmapMatrix),
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoweredMatrix {
    pub data: LoweredData,
    pub order: EmissionOrder,
}

impl LoweredMatrix {
    pub fn to_dense(&self) -> DenseMatrix {
        match &self.data {
            LoweredData::Dense(d) => d.clone(),
            LoweredData::Bitmap(b) => b.decode(),
        }
    }
}

fn check_map(shape: &ConvShape, h: usize, w: usize, c: usize) -> Result<()> {
    if (h, w, c) != (shape.h, shape.w, shape.c) {
        return Err(Error::Shape(format!(
            "map is {h}x{w}x{c}, shape expects {}x{}x{}",
            shape.h, shape.w, shape.c
        )));
    }
    Ok(())
}

/// Dense lowering, generated column by column.
pub fn dense_im2col_outer(map: &FeatureMap, shape: &ConvShape) -> Result<LoweredMatrix> {
    check_map(shape, map.height, map.width, map.channels)?;
    let (rows, cols) = lowered_dims(shape);
    let (ho_n, wo_n, s) = (shape.out_h(), shape.out_w(), shape.stride);
    let mut out = DenseMatrix::zeros(rows, cols);
    for kh in 0..shape.kh {
        for kw in 0..shape.kw {
            for c in 0..shape.c {
                let col = shape.column_index(kh, kw, c);
                for ho in 0..ho_n {
                    let h = ho * s + kh;
                    // the 1×B window over map row h, offset by kw
                    for wo in 0..wo_n {
                        out.set(ho * wo_n + wo, col, map.get(h, wo * s + kw, c));
                    }
                }
            }
        }
    }
    Ok(LoweredMatrix {
        data: LoweredData::Dense(out),
        order: EmissionOrder::ColumnMajor,
    })
}

/// Where one feature-map row contributed to an emitted lane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub map_row: usize,
    pub channel: usize,
    /// Output row `ho` this segment belongs to.
    pub out_row: usize,
    /// Window range `[wo_start, wo_end)` inside the output row.
    pub wo_start: usize,
    pub wo_end: usize,
    /// Set bits shifted out of the row cursor so far.
    pub offset: usize,
    /// Set bits under the window mask.
    pub len: usize,
}

/// One lowered column restricted to one warp-tall row tile, already condensed.
#[derive(Clone, Debug, PartialEq)]
pub struct LoweredLane {
    pub row_tile: usize,
    pub column: usize,
    /// Bit `i` set ⇔ lowered row `row_tile * lane_len + i` is nonzero.
    pub bits: u32,
    /// Nonzeros in row order.
    pub values: Vec<f32>,
    pub segments: Vec<Segment>,
}

impl LoweredLane {
    pub fn expand(&self, lane_len: usize) -> Vec<f32> {
        let mut out = vec![0.0; lane_len];
        for (pos, v) in crate::bits::lane_ones(self.bits).zip(&self.values) {
            out[pos] = *v;
        }
        out
    }
}

/// Operation counts of the bitmap lowering.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Im2colCounters {
    /// Packed values fetched (data-dependent addresses).
    pub value_reads: u64,
    /// Bitmap words read while masking windows.
    pub bitmap_word_reads: u64,
    /// Population counts computed for window lengths and value offsets.
    pub popcounts: u64,
    /// Row-offset lookups, one per feature-map row segment.
    pub offset_reads: u64,
    /// Single-bit cursor shifts.
    pub shifts: u64,
}

impl Im2colCounters {
    pub fn absorb(&mut self, o: &Im2colCounters) {
        self.value_reads += o.value_reads;
        self.bitmap_word_reads += o.bitmap_word_reads;
        self.popcounts += o.popcounts;
        self.offset_reads += o.offset_reads;
        self.shifts += o.shifts;
    }
}

/// Implicit bitmap im2col over a channel-per-matrix encoded map.
#[derive(Clone, Debug)]
pub struct SparseIm2col<'a> {
    maps: &'a [BitmapMatrix],
    shape: ConvShape,
    lane_len: usize,
}

pub fn sparse_im2col_bitmap<'a>(
    maps: &'a [BitmapMatrix],
    shape: &ConvShape,
    lane_len: usize,
) -> Result<SparseIm2col<'a>> {
    if lane_len == 0 || lane_len > 32 {
        return Err(Error::Config(format!("lane length {lane_len} outside 1..=32")));
    }
    if maps.len() != shape.c {
        return Err(Error::Shape(format!(
            "{} channel bitmaps for {} channels",
            maps.len(),
            shape.c
        )));
    }
    for m in maps {
        check_map(shape, m.rows(), m.cols(), shape.c)?;
        m.validate()?;
    }
    Ok(SparseIm2col {
        maps,
        shape: *shape,
        lane_len,
    })
}

impl<'a> SparseIm2col<'a> {
    pub fn shape(&self) -> &ConvShape {
        &self.shape
    }

    pub fn lane_len(&self) -> usize {
        self.lane_len
    }

    pub fn row_tiles(&self) -> usize {
        lowered_dims(&self.shape).0.div_ceil(self.lane_len)
    }

    /// Lanes of one row tile, ascending column index.
    pub fn row_tile(&self, tile: usize) -> RowTileLowering<'a> {
        RowTileLowering::new(self.maps, self.shape, self.lane_len, tile)
    }

    /// Every lane, row tile by row tile.
    pub fn lanes(&self) -> impl Iterator<Item = LoweredLane> + 'a {
        let this = self.clone();
        (0..self.row_tiles()).flat_map(move |t| this.row_tile(t))
    }

    /// Drain the whole stream and return its operation counts.
    pub fn count_ops(&self) -> Im2colCounters {
        let mut total = Im2colCounters::default();
        for t in 0..self.row_tiles() {
            let mut rt = self.row_tile(t);
            for _ in rt.by_ref() {}
            total.absorb(rt.counters());
        }
        total
    }
}

/// A feature-map row being consumed by shifts.
#[derive(Clone, Debug)]
struct RowCursor {
    out_row: usize,
    channel: usize,
    map_row: usize,
    words: Vec<u64>,
    shifted_out: usize,
}

/// Stream of the lanes of one row tile. Holds one cursor per (output row,
/// channel) touched by the tile; no lowered values are kept between lanes.
pub struct RowTileLowering<'a> {
    maps: &'a [BitmapMatrix],
    shape: ConvShape,
    tile: usize,
    first_row: usize,
    end_row: usize,
    kh: usize,
    kw: usize,
    c: usize,
    cursors: Vec<RowCursor>,
    counters: Im2colCounters,
}

impl<'a> RowTileLowering<'a> {
    fn new(maps: &'a [BitmapMatrix], shape: ConvShape, lane_len: usize, tile: usize) -> Self {
        let total_rows = lowered_dims(&shape).0;
        let first_row = (tile * lane_len).min(total_rows);
        let end_row = ((tile + 1) * lane_len).min(total_rows);
        let mut s = Self {
            maps,
            shape,
            tile,
            first_row,
            end_row,
            kh: 0,
            kw: 0,
            c: 0,
            cursors: Vec::new(),
            counters: Im2colCounters::default(),
        };
        if first_row < end_row {
            s.load_cursors();
        }
        s
    }

    pub fn counters(&self) -> &Im2colCounters {
        &self.counters
    }

    fn load_cursors(&mut self) {
        let wo_n = self.shape.out_w();
        let (ho_first, ho_last) = (self.first_row / wo_n, (self.end_row - 1) / wo_n);
        self.cursors.clear();
        for ho in ho_first..=ho_last {
            for c in 0..self.shape.c {
                let map_row = ho * self.shape.stride + self.kh;
                let words = self.maps[c].bitmap().row_words(map_row).to_vec();
                self.cursors.push(RowCursor {
                    out_row: ho,
                    channel: c,
                    map_row,
                    words,
                    shifted_out: 0,
                });
            }
        }
    }

    fn shift_cursors(&mut self) {
        for cur in &mut self.cursors {
            if shift_out_one(&mut cur.words) {
                cur.shifted_out += 1;
            }
            self.counters.shifts += 1;
        }
    }

    fn emit(&mut self) -> LoweredLane {
        let (wo_n, s) = (self.shape.out_w(), self.shape.stride);
        let column = self.shape.column_index(self.kh, self.kw, self.c);
        let mut bits = 0u32;
        let mut values = Vec::new();
        let mut segments = Vec::new();
        for cur in self.cursors.iter().filter(|cur| cur.channel == self.c) {
            let row_base = cur.out_row * wo_n;
            let wo_start = self.first_row.max(row_base) - row_base;
            let wo_end = self.end_row.min(row_base + wo_n) - row_base;
            if wo_start >= wo_end {
                continue;
            }
            let map = &self.maps[cur.channel];
            let row_values = map.row_values(cur.map_row);
            self.counters.offset_reads += 1;
            let (lo, hi) = (wo_start * s, (wo_end - 1) * s);
            self.counters.bitmap_word_reads += (hi / 64 - lo / 64 + 1) as u64;
            // rank of the first window position among the cursor's bits
            let mut rank = cur.shifted_out + count_ones_below(&cur.words, lo);
            self.counters.popcounts += 1;
            let mut len = 0;
            for p in lo..=hi {
                if (cur.words[p / 64] >> (p % 64)) & 1 == 0 {
                    continue;
                }
                if (p - lo) % s == 0 {
                    let wo = p / s;
                    bits |= 1 << (row_base + wo - self.first_row);
                    values.push(row_values[rank]);
                    len += 1;
                }
                rank += 1;
            }
            self.counters.value_reads += len as u64;
            self.counters.popcounts += 1;
            segments.push(Segment {
                map_row: cur.map_row,
                channel: cur.channel,
                out_row: cur.out_row,
                wo_start,
                wo_end,
                offset: cur.shifted_out,
                len,
            });
        }
        LoweredLane {
            row_tile: self.tile,
            column,
            bits,
            values,
            segments,
        }
    }
}

impl Iterator for RowTileLowering<'_> {
    type Item = LoweredLane;

    fn next(&mut self) -> Option<LoweredLane> {
        if self.first_row >= self.end_row || self.kh >= self.shape.kh {
            return None;
        }
        let lane = self.emit();
        self.c += 1;
        if self.c == self.shape.c {
            self.c = 0;
            self.kw += 1;
            if self.kw == self.shape.kw {
                self.kw = 0;
                self.kh += 1;
                if self.kh < self.shape.kh {
                    self.load_cursors();
                }
            } else {
                self.shift_cursors();
            }
        }
        Some(lane)
    }
}

/// Filters stored `N × Kh × Kw × C`, channel fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Filters {
    n: usize,
    kh: usize,
    kw: usize,
    c: usize,
    data: Vec<f32>,
}

impl Filters {
    pub fn new(n: usize, kh: usize, kw: usize, c: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != n * kh * kw * c {
            return Err(Error::Shape(format!(
                "{n}x{kh}x{kw}x{c} filters need {} values, got {}",
                n * kh * kw * c,
                data.len()
            )));
        }
        Ok(Self { n, kh, kw, c, data })
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.n, self.kh, self.kw, self.c)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, n: usize, kh: usize, kw: usize, c: usize) -> f32 {
        self.data[((n * self.kh + kh) * self.kw + kw) * self.c + c]
    }
}

/// Bitmap-encode the `N × (Kh·Kw·C)` weight matrix; row `n` is filter `n`
/// flattened in lowered-column order.
pub fn flatten_weights(filters: &Filters) -> Result<BitmapMatrix> {
    let dense = DenseMatrix::new(filters.n, filters.kh * filters.kw * filters.c, filters.data.clone())?;
    BitmapMatrix::encode(&dense)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig_map() -> FeatureMap {
        // 3×6 map with a mix of zeros
        let v = [
            1.0, 0.0, 2.0, 3.0, 0.0, 4.0, //
            0.0, 5.0, 0.0, 0.0, 6.0, 7.0, //
            8.0, 0.0, 0.0, 9.0, 0.0, 1.5,
        ];
        FeatureMap::new(3, 6, 1, v.to_vec()).unwrap()
    }

    #[test]
    fn lowered_dims_examples() {
        let s = ConvShape::new(3, 6, 1, 3, 3, 1, 1).unwrap();
        assert_eq!(lowered_dims(&s), (4, 9));
        let s = ConvShape::new(1, 1, 1, 1, 1, 1, 1).unwrap();
        assert_eq!(lowered_dims(&s), (1, 1));
        let s = ConvShape::new(8, 8, 2, 3, 3, 1, 1).unwrap();
        assert_eq!(lowered_dims(&s), (36, 18));
        assert!(matches!(ConvShape::new(2, 2, 1, 3, 3, 1, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn b_formula() {
        assert_eq!(values_per_row(6, 3, 1).unwrap(), 4);
        assert_eq!(values_per_row(5, 5, 1).unwrap(), 1);
        assert_eq!(values_per_row(5, 5, 3).unwrap(), 1);
        assert_eq!(values_per_row(7, 3, 2).unwrap(), 3);
        assert!(matches!(values_per_row(6, 3, 2), Err(Error::Shape(_))));
        let s = ConvShape::new(7, 7, 1, 3, 3, 2, 1).unwrap();
        assert_eq!(values_per_column(&s), 3);
        assert_eq!(values_per_column(&s), s.out_w());
    }

    #[test]
    fn first_columns_share_window_values() {
        let s = ConvShape::new(3, 6, 1, 3, 3, 1, 1).unwrap();
        let low = dense_im2col_outer(&fig_map(), &s).unwrap().to_dense();
        let col = |j: usize| (0..4).map(|r| low.get(r, j)).collect::<Vec<_>>();
        assert_eq!(col(0), vec![1.0, 0.0, 2.0, 3.0]);
        assert_eq!(col(1), vec![0.0, 2.0, 3.0, 0.0]);
        assert_eq!(col(2), vec![2.0, 3.0, 0.0, 4.0]);
        assert_eq!(col(0)[1..], col(1)[..3]);
        assert_eq!(col(1)[1..], col(2)[..3]);
    }

    #[test]
    fn fig_map_bitmap_walk() {
        let s = ConvShape::new(3, 6, 1, 3, 3, 1, 1).unwrap();
        let map = fig_map();
        let enc = map.encode_channels().unwrap();
        assert_eq!(enc[0].bitmap().count_ones(), map.channel(0).nnz());
        let stream = sparse_im2col_bitmap(&enc, &s, 32).unwrap();
        let lanes: Vec<_> = stream.lanes().collect();
        assert_eq!(lanes.len(), 9);
        // row 0 bits = 101101: window masks 1011, 0110 (after one shift), 1101
        assert_eq!(lanes[0].bits, 0b1101);
        assert_eq!(lanes[1].bits, 0b0110);
        assert_eq!(lanes[2].bits, 0b1011);
        assert_eq!(lanes[0].values, vec![1.0, 2.0, 3.0]);
        assert_eq!(lanes[1].values, vec![2.0, 3.0]);
        assert_eq!(lanes[2].values, vec![2.0, 3.0, 4.0]);
        let offsets: Vec<_> = lanes[..3].iter().map(|l| l.segments[0].offset).collect();
        assert_eq!(offsets, vec![0, 1, 1]);
        let lens: Vec<_> = lanes[..3].iter().map(|l| l.segments[0].len).collect();
        assert_eq!(lens, vec![3, 2, 3]);
    }

    #[test]
    fn all_zero_map_emits_nothing() {
        let s = ConvShape::new(5, 5, 2, 3, 3, 1, 1).unwrap();
        let map = FeatureMap::new(5, 5, 2, vec![0.0; 50]).unwrap();
        let enc = map.encode_channels().unwrap();
        for lane in sparse_im2col_bitmap(&enc, &s, 32).unwrap().lanes() {
            assert_eq!(lane.bits, 0);
            assert!(lane.values.is_empty());
        }
    }

    #[test]
    fn flatten_weights_layout() {
        let f = Filters::new(1, 1, 1, 1, vec![2.5]).unwrap();
        let b = flatten_weights(&f).unwrap();
        assert_eq!((b.rows(), b.cols(), b.values()), (1, 1, &[2.5][..]));
        let f = Filters::new(2, 1, 2, 1, vec![0.0, 0.0, 1.0, 2.0]).unwrap();
        let b = flatten_weights(&f).unwrap();
        assert_eq!(b.row_offsets(), &[0, 0]);
        assert_eq!(b.row_values(1), &[1.0, 2.0]);
    }

    #[test]
    fn column_tap_roundtrip() {
        let s = ConvShape::new(9, 9, 3, 3, 2, 1, 1).unwrap();
        for j in 0..lowered_dims(&s).1 {
            let (kh, kw, c) = s.column_tap(j);
            assert_eq!(s.column_index(kh, kw, c), j);
        }
    }
}
