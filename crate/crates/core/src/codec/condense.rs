use crate::bits::lane_ones;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Lane granularity of one outer-product instruction on the A side (rows).
pub const A_STEP: usize = 8;
/// Lane granularity of one outer-product instruction on the B side (columns).
pub const B_STEP: usize = 16;
/// Longest lane a 32-bit lane bitmap can describe.
pub const MAX_LANE: usize = 32;

/// Which GEMM operand a tile belongs to. A-side tiles are cut into column
/// lanes, B-side tiles into row lanes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn step(self) -> usize {
        match self {
            Side::A => A_STEP,
            Side::B => B_STEP,
        }
    }
}

/// Allowed padded lane lengths, ascending, ending at the full lane length.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantumLevels(Vec<usize>);

impl QuantumLevels {
    pub fn new(levels: Vec<usize>, lane_len: usize) -> Result<Self> {
        if levels.is_empty() || levels[0] == 0 {
            return Err(Error::Config(format!("quantum levels {levels:?} must be positive")));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "quantum levels {levels:?} must be strictly ascending"
            )));
        }
        if *levels.last().unwrap() != lane_len {
            return Err(Error::Config(format!(
                "quantum levels {levels:?} must end at the lane length {lane_len}"
            )));
        }
        Ok(Self(levels))
    }

    /// Multiples of `step` below `lane_len`, then `lane_len` itself.
    pub fn stepped(step: usize, lane_len: usize) -> Self {
        let mut levels: Vec<usize> = (1..).map(|i| i * step).take_while(|&l| l < lane_len).collect();
        levels.push(lane_len);
        Self(levels)
    }

    /// Default levels for a side: {8,16,24,32} on A, {16,32} on B for 32-long lanes.
    pub fn for_side(side: Side, lane_len: usize) -> Self {
        Self::stepped(side.step(), lane_len)
    }

    pub fn levels(&self) -> &[usize] {
        &self.0
    }

    pub fn lane_len(&self) -> usize {
        *self.0.last().unwrap()
    }

    /// Smallest level holding `count` values; an empty lane pads to nothing.
    pub fn padded_len(&self, count: usize) -> usize {
        if count == 0 {
            return 0;
        }
        self.0
            .iter()
            .copied()
            .find(|&l| l >= count)
            .unwrap_or_else(|| self.lane_len())
    }
}

/// One condensed lane: nonzeros pushed to the front in position order, then
/// zero padding up to the quantized length.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedLane {
    bits: u32,
    values: Vec<f32>,
}

impl CondensedLane {
    /// `values` holds the nonzeros in position order; it is padded here.
    pub fn new(bits: u32, mut values: Vec<f32>, levels: &QuantumLevels) -> Result<Self> {
        let count = bits.count_ones() as usize;
        if values.len() != count {
            return Err(Error::CorruptEncoding(format!(
                "lane bitmap has {count} bits but {} values",
                values.len()
            )));
        }
        if levels.lane_len() < MAX_LANE && bits >> levels.lane_len() != 0 {
            return Err(Error::CorruptEncoding(format!(
                "lane bitmap {bits:#x} exceeds lane length {}",
                levels.lane_len()
            )));
        }
        values.resize(levels.padded_len(count), 0.0);
        Ok(Self { bits, values })
    }

    /// A lane that is fed to the multiplier uncondensed: every position is
    /// treated as occupied, zeros included.
    pub fn dense(values: Vec<f32>) -> Self {
        let len = values.len();
        debug_assert!(len <= MAX_LANE);
        let bits = if len == MAX_LANE { u32::MAX } else { (1u32 << len) - 1 };
        Self { bits, values }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn padded_len(&self) -> usize {
        self.values.len()
    }

    /// Condensed values including padding.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Scatter back to a full-length lane.
    pub fn expand(&self, lane_len: usize) -> Vec<f32> {
        let mut out = vec![0.0; lane_len];
        for (pos, v) in lane_ones(self.bits).zip(&self.values) {
            out[pos] = *v;
        }
        out
    }
}

/// A tile cut into condensed lanes: columns for A-side tiles, rows for B-side.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedTile {
    side: Side,
    lane_len: usize,
    lanes: Vec<CondensedLane>,
}

impl CondensedTile {
    pub fn from_lanes(side: Side, lane_len: usize, lanes: Vec<CondensedLane>) -> Self {
        Self {
            side,
            lane_len,
            lanes,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn lane_len(&self) -> usize {
        self.lane_len
    }

    pub fn lanes(&self) -> &[CondensedLane] {
        &self.lanes
    }

    pub fn into_lanes(self) -> Vec<CondensedLane> {
        self.lanes
    }

    pub fn lane_counts(&self) -> Vec<usize> {
        self.lanes.iter().map(CondensedLane::count).collect()
    }
}

/// Condense a dense tile block lane by lane.
pub fn condense(tile: &DenseMatrix, side: Side, levels: &QuantumLevels) -> Result<CondensedTile> {
    let (lane_len, lane_count) = match side {
        Side::A => (tile.rows(), tile.cols()),
        Side::B => (tile.cols(), tile.rows()),
    };
    if lane_len > MAX_LANE {
        return Err(Error::Shape(format!(
            "lanes of {lane_len} elements do not fit a 32-bit lane bitmap"
        )));
    }
    if levels.lane_len() != lane_len {
        return Err(Error::Config(format!(
            "quantum levels end at {} but lanes hold {lane_len}",
            levels.lane_len()
        )));
    }
    let mut lanes = Vec::with_capacity(lane_count);
    for l in 0..lane_count {
        let mut bits = 0u32;
        let mut values = Vec::new();
        for p in 0..lane_len {
            let v = match side {
                Side::A => tile.get(p, l),
                Side::B => tile.get(l, p),
            };
            if v != 0.0 {
                bits |= 1 << p;
                values.push(v);
            }
        }
        lanes.push(CondensedLane::new(bits, values, levels)?);
    }
    Ok(CondensedTile::from_lanes(side, lane_len, lanes))
}
