use anyhow::{Context, Result};
use log::{debug, info};
use rayon::prelude::*;

use dstc::codec::{TwoLevelBitmapMatrix, ValueOrder};
use dstc::cost::{conv_cost, gemm_cost, CostConfig, CostReport};
use dstc::gen;
use dstc::im2col::{dense_im2col_outer, lowered_dims, sparse_im2col_bitmap};
use dstc::reference;
use dstc::spconv::{ConvMode, ConvProblem};
use dstc::spgemm::{DeviceConfig, LaneMode, StepTrace};
use dstc::DenseMatrix;

use crate::csr::csr_im2col;
use crate::scenario::{parse_mode, GemmSpec, LayerSpec, Scenario, Workload};

/// Relative Frobenius error allowed against the dense reference.
pub const ORACLE_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: u64,
    pub tile: usize,
    pub cost: CostConfig,
    pub keep_traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tile: 32,
            cost: CostConfig::default(),
            keep_traces: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub passed: bool,
    pub rel_frobenius_error: f64,
    /// Largest elementwise error over the largest reference magnitude.
    pub max_rel_error: f64,
}

impl OracleCheck {
    pub fn compare(out: &DenseMatrix, expect: &DenseMatrix) -> Result<Self> {
        let fro = out.relative_frobenius_error(expect)?;
        let scale = expect.data().iter().fold(0.0f64, |m, v| m.max(v.abs() as f64));
        let worst = out
            .data()
            .iter()
            .zip(expect.data())
            .fold(0.0f64, |m, (o, e)| m.max((*o as f64 - *e as f64).abs()));
        let max_rel_error = if scale > 0.0 { worst / scale } else { worst };
        Ok(Self {
            passed: fro <= ORACLE_TOLERANCE,
            rel_frobenius_error: fro,
            max_rel_error,
        })
    }
}

/// One executed GEMM or convolution.
#[derive(Clone, Debug)]
pub struct KernelRow {
    pub scenario: String,
    pub kind: &'static str,
    pub repetition: usize,
    pub seed: u64,
    pub mode: ConvMode,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub a_density: f64,
    pub b_density: f64,
    pub a_nnz: usize,
    pub b_nnz: usize,
    pub oracle: OracleCheck,
    pub executed_substeps: u64,
    pub baseline_substeps: u64,
    pub warp_skipped_sets: u64,
    pub cost: CostReport,
    pub trace: Option<StepTrace>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathOps {
    pub path: &'static str,
    pub value_reads: u64,
    pub index_reads: u64,
    pub bitmap_word_reads: u64,
    pub offset_computations: u64,
    pub data_dependent_reads: u64,
}

/// Read counts of the dense, CSR and bitmap lowering of one feature map.
#[derive(Clone, Debug)]
pub struct Im2colRow {
    pub scenario: String,
    pub repetition: usize,
    pub seed: u64,
    pub lowered_rows: usize,
    pub lowered_cols: usize,
    pub lowered_nnz: u64,
    pub paths: [PathOps; 3],
}

#[derive(Clone, Debug)]
pub enum RowResult {
    Kernel(Box<KernelRow>),
    Im2col(Box<Im2colRow>),
}

impl RowResult {
    pub fn passed(&self) -> bool {
        match self {
            RowResult::Kernel(k) => k.oracle.passed,
            RowResult::Im2col(_) => true,
        }
    }
}

fn lane_modes(mode: ConvMode) -> (LaneMode, LaneMode) {
    match mode {
        ConvMode::Dense => (LaneMode::Dense, LaneMode::Dense),
        ConvMode::SingleSparse => (LaneMode::Dense, LaneMode::Condensed),
        ConvMode::DualSparse => (LaneMode::Condensed, LaneMode::Condensed),
    }
}

pub fn run_gemm(name: &str, g: &GemmSpec, seed: u64, rep: usize, opts: &RunOptions) -> Result<KernelRow> {
    let mut rng = gen::rng(seed);
    let a = gen::sparse_matrix(g.m, g.k, g.a_density, &mut rng)?;
    let b = gen::sparse_matrix(g.k, g.n, g.b_density, &mut rng)?;
    let ea = TwoLevelBitmapMatrix::encode(&a, opts.tile, opts.tile, ValueOrder::ColumnMajor)?;
    let eb = TwoLevelBitmapMatrix::encode(&b, opts.tile, opts.tile, ValueOrder::RowMajor)?;
    let mode = g.mode.as_deref().map(parse_mode).transpose()?.unwrap_or(ConvMode::DualSparse);
    let (a_mode, b_mode) = lane_modes(mode);
    let device = DeviceConfig {
        a_mode,
        b_mode,
        keep_records: opts.keep_traces,
        ..DeviceConfig::default()
    };
    let (out, trace, cost) = gemm_cost(name, &ea, &eb, None, &device, &opts.cost)?;
    let oracle = OracleCheck::compare(&out, &reference::gemm(&a, &b, None)?)?;
    let s = *trace.summary();
    Ok(KernelRow {
        scenario: name.to_string(),
        kind: "gemm",
        repetition: rep,
        seed,
        mode,
        m: g.m,
        n: g.n,
        k: g.k,
        a_density: g.a_density,
        b_density: g.b_density,
        a_nnz: a.nnz(),
        b_nnz: b.nnz(),
        oracle,
        executed_substeps: s.executed_substeps,
        baseline_substeps: s.baseline_substeps(),
        warp_skipped_sets: s.warp_skipped_sets,
        cost,
        trace: opts.keep_traces.then_some(trace),
    })
}

pub fn run_conv(l: &LayerSpec, seed: u64, rep: usize, opts: &RunOptions) -> Result<KernelRow> {
    let shape = l.shape()?;
    let mode = parse_mode(&l.mode)?;
    let mut rng = gen::rng(seed);
    let map = gen::feature_map(l.h, l.w, l.c, l.act_density, &mut rng)?;
    let filters = gen::filters(l.n, l.kh, l.kw, l.c, l.wgt_density, &mut rng)?;
    let problem = ConvProblem::from_dense(shape, &map, &filters, mode)?;
    let (out, trace, stats, cost) = conv_cost(&l.name, &problem, &opts.cost)?;
    debug!("{}: peak live lowered values {}", l.name, stats.peak_live_lowered_values);
    let oracle = OracleCheck::compare(&out, &reference::conv2d(&map, &filters, &shape)?)?;
    let (m, k) = lowered_dims(&shape);
    let s = *trace.summary();
    Ok(KernelRow {
        scenario: l.name.clone(),
        kind: "conv",
        repetition: rep,
        seed,
        mode,
        m,
        n: l.n,
        k,
        a_density: l.act_density,
        b_density: l.wgt_density,
        a_nnz: map.data().iter().filter(|v| **v != 0.0).count(),
        b_nnz: filters.data().iter().filter(|v| **v != 0.0).count(),
        oracle,
        executed_substeps: s.executed_substeps,
        baseline_substeps: s.baseline_substeps(),
        warp_skipped_sets: s.warp_skipped_sets,
        cost,
        trace: opts.keep_traces.then_some(trace),
    })
}

pub fn run_im2col(l: &LayerSpec, seed: u64, rep: usize) -> Result<Im2colRow> {
    let shape = l.shape()?;
    let map = gen::feature_map(l.h, l.w, l.c, l.act_density, &mut gen::rng(seed))?;
    let (rows, cols) = lowered_dims(&shape);

    // dense addresses are affine in the loop indices
    let lowered = dense_im2col_outer(&map, &shape)?.to_dense();
    let dense = PathOps {
        path: "dense",
        value_reads: (rows * cols) as u64,
        index_reads: 0,
        bitmap_word_reads: 0,
        offset_computations: 0,
        data_dependent_reads: 0,
    };

    let (_, c) = csr_im2col(&map, &shape);
    let csr = PathOps {
        path: "csr",
        value_reads: c.value_reads,
        index_reads: c.row_ptr_reads + c.col_idx_reads,
        bitmap_word_reads: 0,
        offset_computations: 0,
        data_dependent_reads: c.data_dependent_reads(),
    };

    let enc = map.encode_channels()?;
    let ops = sparse_im2col_bitmap(&enc, &shape, 32)?.count_ops();
    let bitmap = PathOps {
        path: "bitmap",
        value_reads: ops.value_reads,
        index_reads: ops.offset_reads,
        bitmap_word_reads: ops.bitmap_word_reads,
        offset_computations: ops.popcounts + ops.shifts,
        data_dependent_reads: ops.value_reads + ops.offset_reads,
    };

    Ok(Im2colRow {
        scenario: l.name.clone(),
        repetition: rep,
        seed,
        lowered_rows: rows,
        lowered_cols: cols,
        lowered_nnz: lowered.nnz() as u64,
        paths: [dense, csr, bitmap],
    })
}

/// Seed of repetition `rep`.
pub fn rep_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64)
}

pub fn run_one(s: &Scenario, rep: usize, opts: &RunOptions) -> Result<RowResult> {
    let seed = rep_seed(s.seed.unwrap_or(opts.seed), rep);
    let name = s.name();
    let row = match &s.workload {
        Workload::Gemm(g) => RowResult::Kernel(Box::new(run_gemm(&name, g, seed, rep, opts)?)),
        Workload::Conv(l) => RowResult::Kernel(Box::new(run_conv(l, seed, rep, opts)?)),
        Workload::Im2colBench(l) => RowResult::Im2col(Box::new(run_im2col(l, seed, rep)?)),
    };
    info!("{name} rep {rep} done");
    Ok(row)
}

/// Run every scenario × repetition on the current rayon pool. Results come
/// back in scenario-file order.
pub fn run_sweep(scenarios: &[Scenario], opts: &RunOptions) -> Result<Vec<RowResult>> {
    let jobs: Vec<(usize, usize)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.repetitions).map(move |r| (i, r)))
        .collect();
    jobs.par_iter()
        .map(|&(i, r)| {
            let s = &scenarios[i];
            run_one(s, r, opts).with_context(|| format!("scenario {} rep {r}", s.name()))
        })
        .collect()
}
