//! Convolution as a GEMM of lowered activations (operand A, `Ho·Wo × Kh·Kw·C`)
//! by transposed flattened weights (operand B, `Kh·Kw·C × N`). In dual-sparse
//! mode the A lanes come straight from the bitmap im2col stream, one 32-lane
//! reduction tile at a time.

use crate::codec::{
    BitmapMatrix, CondensedLane, QuantumLevels, Side, TwoLevelBitmapMatrix, MAX_LANE,
};
use crate::error::{Error, Result};
use crate::im2col::{lowered_dims, sparse_im2col_bitmap, ConvShape, FeatureMap, Filters, Im2colCounters};
use crate::matrix::DenseMatrix;
use crate::spgemm::{
    device::LaneGrid, ohmma_substeps, run_sets, Accumulator, LaneMode, PartialObserver, StepRecord,
    StepTrace,
};

const TILE: usize = MAX_LANE;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConvMode {
    /// Nothing condensed; the full baseline step count.
    Dense,
    /// Weights condensed, activations dense.
    SingleSparse,
    /// Both operands condensed.
    DualSparse,
}

impl ConvMode {
    fn lane_modes(self) -> (LaneMode, LaneMode) {
        match self {
            ConvMode::Dense => (LaneMode::Dense, LaneMode::Dense),
            ConvMode::SingleSparse => (LaneMode::Dense, LaneMode::Condensed),
            ConvMode::DualSparse => (LaneMode::Condensed, LaneMode::Condensed),
        }
    }
}

impl std::str::FromStr for ConvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(ConvMode::Dense),
            "single" => Ok(ConvMode::SingleSparse),
            "dual" => Ok(ConvMode::DualSparse),
            _ => Err(Error::Config(format!("unknown conv mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConvProblem {
    shape: ConvShape,
    input: Vec<BitmapMatrix>,
    weights: BitmapMatrix,
    mode: ConvMode,
}

impl ConvProblem {
    /// `input` holds one bitmap per channel; `weights` is `N × (Kh·Kw·C)`.
    pub fn new(shape: ConvShape, input: Vec<BitmapMatrix>, weights: BitmapMatrix, mode: ConvMode) -> Result<Self> {
        if input.len() != shape.channels() {
            return Err(Error::Shape(format!(
                "{} input channels for a {}-channel shape",
                input.len(),
                shape.channels()
            )));
        }
        for m in &input {
            if (m.rows(), m.cols()) != (shape.height(), shape.width()) {
                return Err(Error::Shape(format!(
                    "input channel is {}x{}, shape expects {}x{}",
                    m.rows(),
                    m.cols(),
                    shape.height(),
                    shape.width()
                )));
            }
        }
        let kc = lowered_dims(&shape).1;
        if (weights.rows(), weights.cols()) != (shape.filters(), kc) {
            return Err(Error::Shape(format!(
                "weights are {}x{}, expected {}x{kc}",
                weights.rows(),
                weights.cols(),
                shape.filters()
            )));
        }
        Ok(Self {
            shape,
            input,
            weights,
            mode,
        })
    }

    pub fn from_dense(shape: ConvShape, map: &FeatureMap, filters: &Filters, mode: ConvMode) -> Result<Self> {
        Self::new(shape, map.encode_channels()?, crate::im2col::flatten_weights(filters)?, mode)
    }

    pub fn shape(&self) -> &ConvShape {
        &self.shape
    }

    pub fn mode(&self) -> ConvMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: ConvMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn input(&self) -> &[BitmapMatrix] {
        &self.input
    }

    pub fn weights(&self) -> &BitmapMatrix {
        &self.weights
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConvStats {
    /// Largest number of lowered activation values held at once.
    pub peak_live_lowered_values: usize,
    pub im2col: Im2colCounters,
}

pub struct ConvRun<O> {
    pub output: DenseMatrix,
    pub trace: StepTrace,
    pub stats: ConvStats,
    /// One observer per output tile, row-major over the tile grid.
    pub observers: Vec<O>,
}

pub fn spconv(problem: &ConvProblem) -> Result<(DenseMatrix, StepTrace)> {
    let run = spconv_with(problem, false, |_, _| ())?;
    Ok((run.output, run.trace))
}

pub fn spconv_with<O, F>(problem: &ConvProblem, keep_records: bool, make_observer: F) -> Result<ConvRun<O>>
where
    O: PartialObserver + Send,
    F: Fn(usize, usize) -> O + Sync,
{
    let shape = &problem.shape;
    let (m, kc) = lowered_dims(shape);
    let n = shape.filters();
    let (a_mode, b_mode) = problem.mode.lane_modes();

    let wt = problem.weights.decode().transpose();
    let b = TwoLevelBitmapMatrix::encode_rhs(&wt)?;
    let b_grid = LaneGrid::build(&b, Side::B, b_mode, &QuantumLevels::for_side(Side::B, TILE))?;
    let a_levels = QuantumLevels::for_side(Side::A, TILE);
    let stream = sparse_im2col_bitmap(&problem.input, shape, TILE)?;

    let (grid_m, grid_n, grid_k) = (m.div_ceil(TILE), n.div_ceil(TILE), kc.div_ceil(TILE));
    let zero_b: Vec<CondensedLane> = (0..TILE).map(|_| CondensedLane::dense(vec![0.0; TILE])).collect();
    let baseline = ohmma_substeps(TILE, TILE);

    struct TileOut<O> {
        accs: Vec<Accumulator>,
        trace: StepTrace,
        observers: Vec<O>,
        stats: ConvStats,
    }

    let run_row_tile = |mt: usize| -> Result<TileOut<O>> {
        let mut accs: Vec<Accumulator> = (0..grid_n).map(|_| Accumulator::zeros(TILE, TILE)).collect();
        let mut observers: Vec<O> = (0..grid_n).map(|nt| make_observer(mt, nt)).collect();
        let mut trace = StepTrace::new(TILE, TILE, keep_records);
        trace.add_tiles(grid_n as u64);
        let mut stats = ConvStats::default();
        let mut lanes = stream.row_tile(mt);
        for kt in 0..grid_k {
            let mut a_lanes = Vec::with_capacity(TILE);
            let mut live = 0;
            let mut nonzero = false;
            for _ in 0..TILE {
                let lane = match lanes.next() {
                    Some(l) => {
                        debug_assert_eq!(l.column, kt * TILE + a_lanes.len());
                        nonzero |= l.bits != 0;
                        match a_mode {
                            LaneMode::Condensed => CondensedLane::new(l.bits, l.values, &a_levels)?,
                            LaneMode::Dense => CondensedLane::dense(l.expand(TILE)),
                        }
                    }
                    // reduction padding past the last lowered column
                    None => match a_mode {
                        LaneMode::Condensed => CondensedLane::new(0, Vec::new(), &a_levels)?,
                        LaneMode::Dense => CondensedLane::dense(vec![0.0; TILE]),
                    },
                };
                live += lane.padded_len();
                a_lanes.push(lane);
            }
            stats.peak_live_lowered_values = stats.peak_live_lowered_values.max(live);
            let a_present = nonzero || a_mode == LaneMode::Dense;
            for nt in 0..grid_n {
                let b_lanes = match (b_grid.get(kt, nt), b_mode) {
                    (Some(l), _) => Some(l),
                    (None, LaneMode::Dense) => Some(zero_b.as_slice()),
                    (None, LaneMode::Condensed) => None,
                };
                match b_lanes {
                    Some(b_lanes) if a_present => run_sets(
                        &a_lanes,
                        b_lanes,
                        &mut accs[nt],
                        (mt, nt),
                        kt * TILE,
                        &mut trace,
                        &mut observers[nt],
                    )?,
                    _ => {
                        for k in 0..TILE {
                            trace.push(StepRecord {
                                tile_row: mt,
                                tile_col: nt,
                                k_index: kt * TILE + k,
                                executed_substeps: 0,
                                baseline_substeps: baseline,
                                skipped_by_warp_bit: true,
                            });
                        }
                    }
                }
            }
        }
        for _ in lanes.by_ref() {}
        stats.im2col = *lanes.counters();
        Ok(TileOut {
            accs,
            trace,
            observers,
            stats,
        })
    };

    #[cfg(feature = "parallel")]
    let tiles = {
        use rayon::prelude::*;
        (0..grid_m).into_par_iter().map(run_row_tile).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let tiles = (0..grid_m).map(run_row_tile).collect::<Result<Vec<_>>>()?;

    let mut output = DenseMatrix::zeros(m, n);
    let mut trace = StepTrace::new(TILE, TILE, keep_records);
    let mut stats = ConvStats::default();
    let mut observers = Vec::with_capacity(grid_m * grid_n);
    for (mt, t) in tiles.into_iter().enumerate() {
        for (nt, acc) in t.accs.iter().enumerate() {
            for r in 0..TILE.min(m - mt * TILE) {
                for c in 0..TILE.min(n - nt * TILE) {
                    output.set(mt * TILE + r, nt * TILE + c, acc.get(r, c));
                }
            }
        }
        trace.extend(t.trace);
        stats.peak_live_lowered_values = stats.peak_live_lowered_values.max(t.stats.peak_live_lowered_values);
        stats.im2col.absorb(&t.stats.im2col);
        observers.extend(t.observers);
    }
    Ok(ConvRun {
        output,
        trace,
        stats,
        observers,
    })
}
