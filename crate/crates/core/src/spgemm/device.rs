use super::{run_sets, Accumulator, PartialObserver, StepRecord, StepTrace};
use crate::codec::{CondensedLane, QuantumLevels, Side, TwoLevelBitmapMatrix, MAX_LANE};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// How an operand's lanes reach the multiplier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LaneMode {
    /// Nonzeros condensed and quantized; empty tiles are skipped by warp bit.
    Condensed,
    /// Full lanes, zeros included; nothing is skipped.
    Dense,
}

#[derive(Clone, Debug)]
pub struct DeviceConfig {
    /// Reduction depth loaded per block iteration.
    pub k_depth: usize,
    pub a_mode: LaneMode,
    pub b_mode: LaneMode,
    /// Overrides of the default stepped quantization.
    pub a_levels: Option<QuantumLevels>,
    pub b_levels: Option<QuantumLevels>,
    pub keep_records: bool,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            k_depth: 16,
            a_mode: LaneMode::Condensed,
            b_mode: LaneMode::Condensed,
            a_levels: None,
            b_levels: None,
            keep_records: false,
        }
    }
}

impl DeviceConfig {
    /// Every skip disabled: the dense baseline of the same problem.
    pub fn dense() -> Self {
        Self {
            a_mode: LaneMode::Dense,
            b_mode: LaneMode::Dense,
            ..Self::default()
        }
    }
}

pub struct DeviceRun<O> {
    pub output: DenseMatrix,
    pub trace: StepTrace,
    /// One observer per output tile, row-major over the tile grid.
    pub observers: Vec<O>,
}

/// Lanes of every tile of an operand, `None` where the warp bit is clear.
pub(crate) struct LaneGrid {
    lanes: Vec<Option<Vec<CondensedLane>>>,
    grid_cols: usize,
}

impl LaneGrid {
    pub(crate) fn build(
        m: &TwoLevelBitmapMatrix,
        side: Side,
        mode: LaneMode,
        levels: &QuantumLevels,
    ) -> Result<Self> {
        let cells: Vec<(usize, usize)> = (0..m.grid_rows())
            .flat_map(|r| (0..m.grid_cols()).map(move |c| (r, c)))
            .collect();
        let build_one = |&(r, c): &(usize, usize)| -> Result<Option<Vec<CondensedLane>>> {
            m.tile(r, c)
                .map(|t| match mode {
                    LaneMode::Condensed => t.condensed_lanes(side, m.order(), levels),
                    LaneMode::Dense => Ok(t.dense_lanes(side, m.order())),
                })
                .transpose()
        };
        #[cfg(feature = "parallel")]
        let lanes = {
            use rayon::prelude::*;
            cells.par_iter().map(build_one).collect::<Result<Vec<_>>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let lanes = cells.iter().map(build_one).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lanes,
            grid_cols: m.grid_cols(),
        })
    }

    pub(crate) fn get(&self, r: usize, c: usize) -> Option<&[CondensedLane]> {
        self.lanes[r * self.grid_cols + c].as_deref()
    }
}

fn levels_for(
    explicit: &Option<QuantumLevels>,
    side: Side,
    lane_len: usize,
) -> Result<QuantumLevels> {
    match explicit {
        Some(l) if l.lane_len() != lane_len => Err(Error::Config(format!(
            "{side:?}-side quantum levels end at {} but lanes hold {lane_len}",
            l.lane_len()
        ))),
        Some(l) => Ok(l.clone()),
        None => Ok(QuantumLevels::for_side(side, lane_len)),
    }
}

/// `A × B + C` with the default configuration.
pub fn device_spgemm(
    a: &TwoLevelBitmapMatrix,
    b: &TwoLevelBitmapMatrix,
    c: Option<&DenseMatrix>,
) -> Result<(DenseMatrix, StepTrace)> {
    let run = device_spgemm_with(a, b, c, &DeviceConfig::default(), |_, _| ())?;
    Ok((run.output, run.trace))
}

/// `A × B + C` over the output tile grid. Output tiles are independent; each
/// owns its accumulator and observer. Within a tile, steps run in ascending
/// `k` and tiles whose warp bit is clear on a condensed operand are skipped.
pub fn device_spgemm_with<O, F>(
    a: &TwoLevelBitmapMatrix,
    b: &TwoLevelBitmapMatrix,
    c: Option<&DenseMatrix>,
    cfg: &DeviceConfig,
    make_observer: F,
) -> Result<DeviceRun<O>>
where
    O: PartialObserver + Send,
    F: Fn(usize, usize) -> O + Sync,
{
    if a.cols() != b.rows() {
        return Err(Error::Shape(format!(
            "inner dimensions differ: A is {}x{}, B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if a.tile_cols() != b.tile_rows() {
        return Err(Error::Shape(format!(
            "reduction tiling differs: A tiles are {} wide, B tiles {} tall",
            a.tile_cols(),
            b.tile_rows()
        )));
    }
    let (tile_m, tile_n, tile_k) = (a.tile_rows(), b.tile_cols(), a.tile_cols());
    if tile_m > MAX_LANE || tile_n > MAX_LANE {
        return Err(Error::Shape(format!("{tile_m}x{tile_n} warp tile exceeds 32x32")));
    }
    if let Some(c) = c {
        if c.rows() != a.rows() || c.cols() != b.cols() {
            return Err(Error::Shape(format!(
                "bias is {}x{}, product is {}x{}",
                c.rows(),
                c.cols(),
                a.rows(),
                b.cols()
            )));
        }
    }
    if cfg.k_depth == 0 {
        return Err(Error::Config("k_depth must be at least 1".into()));
    }
    let a_levels = levels_for(&cfg.a_levels, Side::A, tile_m)?;
    let b_levels = levels_for(&cfg.b_levels, Side::B, tile_n)?;
    let a_grid = LaneGrid::build(a, Side::A, cfg.a_mode, &a_levels)?;
    let b_grid = LaneGrid::build(b, Side::B, cfg.b_mode, &b_levels)?;
    let zero_a: Vec<CondensedLane> = (0..tile_k).map(|_| CondensedLane::dense(vec![0.0; tile_m])).collect();
    let zero_b: Vec<CondensedLane> = (0..tile_k).map(|_| CondensedLane::dense(vec![0.0; tile_n])).collect();

    let (grid_m, grid_n, grid_k) = (a.grid_rows(), b.grid_cols(), a.grid_cols());
    let (m, n) = (a.rows(), b.cols());

    let run_tile = |idx: usize| -> Result<(Accumulator, StepTrace, O)> {
        let (mt, nt) = (idx / grid_n, idx % grid_n);
        let bias = Accumulator::with_bias(
            tile_m,
            tile_n,
            (0..tile_m * tile_n)
                .map(|i| {
                    let (r, col) = (mt * tile_m + i / tile_n, nt * tile_n + i % tile_n);
                    match c {
                        Some(c) if r < m && col < n => c.get(r, col),
                        _ => 0.0,
                    }
                })
                .collect(),
        )?;
        let mut acc = bias;
        let mut trace = StepTrace::new(tile_m, tile_n, cfg.keep_records);
        trace.add_tiles(1);
        let mut observer = make_observer(mt, nt);
        for kt in 0..grid_k {
            let a_lanes = match (a_grid.get(mt, kt), cfg.a_mode) {
                (Some(l), _) => Some(l),
                (None, LaneMode::Dense) => Some(zero_a.as_slice()),
                (None, LaneMode::Condensed) => None,
            };
            let b_lanes = match (b_grid.get(kt, nt), cfg.b_mode) {
                (Some(l), _) => Some(l),
                (None, LaneMode::Dense) => Some(zero_b.as_slice()),
                (None, LaneMode::Condensed) => None,
            };
            let (Some(a_lanes), Some(b_lanes)) = (a_lanes, b_lanes) else {
                for k in 0..tile_k {
                    trace.push(StepRecord {
                        tile_row: mt,
                        tile_col: nt,
                        k_index: kt * tile_k + k,
                        executed_substeps: 0,
                        baseline_substeps: super::ohmma_substeps(tile_m, tile_n),
                        skipped_by_warp_bit: true,
                    });
                }
                continue;
            };
            for k0 in (0..tile_k).step_by(cfg.k_depth) {
                let k1 = (k0 + cfg.k_depth).min(tile_k);
                run_sets(
                    &a_lanes[k0..k1],
                    &b_lanes[k0..k1],
                    &mut acc,
                    (mt, nt),
                    kt * tile_k + k0,
                    &mut trace,
                    &mut observer,
                )?;
            }
        }
        Ok((acc, trace, observer))
    };

    #[cfg(feature = "parallel")]
    let tiles = {
        use rayon::prelude::*;
        (0..grid_m * grid_n)
            .into_par_iter()
            .map(run_tile)
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let tiles = (0..grid_m * grid_n).map(run_tile).collect::<Result<Vec<_>>>()?;

    let mut output = DenseMatrix::zeros(m, n);
    let mut trace = StepTrace::new(tile_m, tile_n, cfg.keep_records);
    let mut observers = Vec::with_capacity(tiles.len());
    for (idx, (acc, t, o)) in tiles.into_iter().enumerate() {
        let (mt, nt) = (idx / grid_n, idx % grid_n);
        for r in 0..tile_m {
            let gr = mt * tile_m + r;
            if gr >= m {
                break;
            }
            for col in 0..tile_n {
                let gc = nt * tile_n + col;
                if gc >= n {
                    break;
                }
                output.set(gr, gc, acc.get(r, col));
            }
        }
        trace.extend(t);
        observers.push(o);
    }
    Ok(DeviceRun {
        output,
        trace,
        observers,
    })
}
