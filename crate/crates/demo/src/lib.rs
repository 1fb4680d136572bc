//! Browser bindings. Every export returns a JSON string so the page needs no
//! generated type glue beyond `wasm-bindgen` itself.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dstc::codec::{CondensedLane, QuantumLevels, Side, TwoLevelBitmapMatrix};
use dstc::cost::{gemm_cost, total_cost, AccMode, AccumulationSim, CostConfig};
use dstc::gen;
use dstc::im2col::{sparse_im2col_bitmap, ConvShape};
use dstc::spgemm::{multiply_bitmap, warp_spgemm, Accumulator, DeviceConfig, PartialProduct};

/// Largest side the im2col view accepts; keeps the page responsive.
pub const MAX_VIEW: usize = 24;
/// Largest GEMM edge for the speedup curve.
pub const MAX_CURVE: usize = 256;

#[derive(Serialize)]
struct WarpStep {
    a_nnz: u32,
    b_nnz: u32,
    a_padded: usize,
    b_padded: usize,
    substeps: u64,
    baseline_substeps: u64,
    product_rows: Vec<u32>,
    product_nnz: usize,
    issue_cycles: u64,
    baseline_issue_cycles: u64,
    total_cycles: u64,
    baseline_cycles: u64,
}

#[derive(Serialize)]
struct Error {
    error: String,
}

fn to_json<T: Serialize>(r: Result<T, String>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v),
        Err(error) => serde_json::to_string(&Error { error }),
    }
    .expect("plain data serializes")
}

fn warp_step_impl(a_bits: u32, b_bits: u32) -> Result<WarpStep, String> {
    let e = |x: dstc::Error| x.to_string();
    let lane = |bits: u32, side| {
        let values = vec![1.0; bits.count_ones() as usize];
        CondensedLane::new(bits, values, &QuantumLevels::for_side(side, 32))
    };
    let (a, b) = (lane(a_bits, Side::A).map_err(e)?, lane(b_bits, Side::B).map_err(e)?);
    let (a_padded, b_padded) = (a.padded_len(), b.padded_len());
    let partial = PartialProduct::from_lanes(&a, &b);
    let mut acc = Accumulator::zeros(32, 32);
    let trace = warp_spgemm(&[a], &[b], &mut acc).map_err(e)?;
    let product = multiply_bitmap(a_bits, b_bits);

    let cfg = CostConfig::default();
    let mut sim = AccumulationSim::new(&cfg, AccMode::Sparse).map_err(e)?;
    if trace.summary().executed_substeps > 0 {
        sim.push_partial(&partial).map_err(e)?;
    }
    let s = trace.summary();
    let report = total_cost("warp", s, sim.finish(), &cfg);
    Ok(WarpStep {
        a_nnz: a_bits.count_ones(),
        b_nnz: b_bits.count_ones(),
        a_padded,
        b_padded,
        substeps: s.executed_substeps,
        baseline_substeps: s.baseline_substeps(),
        product_rows: product.rows().to_vec(),
        product_nnz: product.count_ones(),
        issue_cycles: report.issue_cycles,
        baseline_issue_cycles: s.baseline_substeps() + cfg.bohmma_cost,
        total_cycles: report.total_cycles,
        baseline_cycles: report.baseline_cycles,
    })
}

/// One 32×32×1 outer-product set for lane bitmaps `a_bits` and `b_bits`.
#[wasm_bindgen]
pub fn warp_step(a_bits: u32, b_bits: u32) -> String {
    to_json(warp_step_impl(a_bits, b_bits))
}

#[derive(Serialize)]
struct LoweredColumn {
    kh: usize,
    kw: usize,
    /// Set bit `i` marks output position `i` as nonzero.
    bits: Vec<bool>,
    values: Vec<f32>,
}

#[derive(Serialize)]
struct Im2colView {
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
    map: Vec<Vec<f32>>,
    columns: Vec<LoweredColumn>,
    dense_reads: usize,
    value_reads: u64,
    bitmap_word_reads: u64,
    popcounts: u64,
}

fn im2col_impl(size: usize, kernel: usize, stride: usize, density: f64, seed: u64) -> Result<Im2colView, String> {
    let e = |x: dstc::Error| x.to_string();
    if !(1..=MAX_VIEW).contains(&size) {
        return Err(format!("size must be in 1..={MAX_VIEW}"));
    }
    let shape = ConvShape::new(size, size, 1, kernel, kernel, stride, 1).map_err(e)?;
    let map = gen::feature_map(size, size, 1, density, &mut gen::rng(seed)).map_err(e)?;
    let enc = map.encode_channels().map_err(e)?;
    let stream = sparse_im2col_bitmap(&enc, &shape, 32).map_err(e)?;
    let rows = shape.out_h() * shape.out_w();
    let mut columns: Vec<LoweredColumn> = (0..kernel * kernel)
        .map(|col| {
            let (kh, kw, _) = shape.column_tap(col);
            LoweredColumn { kh, kw, bits: vec![false; rows], values: Vec::new() }
        })
        .collect();
    for lane in stream.lanes() {
        let c = &mut columns[lane.column];
        for i in 0..32 {
            let r = lane.row_tile * 32 + i;
            if r < rows && (lane.bits >> i) & 1 == 1 {
                c.bits[r] = true;
            }
        }
        c.values.extend_from_slice(&lane.values);
    }
    let ops = stream.count_ops();
    Ok(Im2colView {
        height: size,
        width: size,
        out_h: shape.out_h(),
        out_w: shape.out_w(),
        map: (0..size).map(|h| (0..size).map(|w| map.get(h, w, 0)).collect()).collect(),
        columns,
        dense_reads: rows * kernel * kernel,
        value_reads: ops.value_reads,
        bitmap_word_reads: ops.bitmap_word_reads,
        popcounts: ops.popcounts,
    })
}

/// Lower a random single-channel `size`×`size` map through the bitmap im2col.
#[wasm_bindgen]
pub fn im2col_view(size: usize, kernel: usize, stride: usize, density: f64, seed: u32) -> String {
    to_json(im2col_impl(size, kernel, stride, density, seed as u64))
}

#[derive(Serialize)]
struct CurvePoint {
    a_density: f64,
    with_collector: f64,
    without_collector: f64,
    step_speedup: f64,
}

fn curve_impl(size: usize, b_density: f64, seed: u64) -> Result<Vec<CurvePoint>, String> {
    let e = |x: dstc::Error| x.to_string();
    if !(1..=MAX_CURVE).contains(&size) {
        return Err(format!("size must be in 1..={MAX_CURVE}"));
    }
    let mut rng = gen::rng(seed);
    let b = gen::sparse_matrix(size, size, b_density, &mut rng).map_err(e)?;
    let eb = TwoLevelBitmapMatrix::encode_rhs(&b).map_err(e)?;
    let on = CostConfig::default();
    let off = CostConfig { use_operand_collector: false, ..CostConfig::default() };
    let mut points = Vec::new();
    for a_density in [1.0, 0.7, 0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01] {
        let a = gen::sparse_matrix(size, size, a_density, &mut rng).map_err(e)?;
        let ea = TwoLevelBitmapMatrix::encode_lhs(&a).map_err(e)?;
        let dev = DeviceConfig::default();
        let (_, trace, with) = gemm_cost("on", &ea, &eb, None, &dev, &on).map_err(e)?;
        let (_, _, without) = gemm_cost("off", &ea, &eb, None, &dev, &off).map_err(e)?;
        points.push(CurvePoint {
            a_density,
            with_collector: with.speedup,
            without_collector: without.speedup,
            step_speedup: trace.summary().step_speedup(),
        });
    }
    Ok(points)
}

/// Modeled speedup of a square GEMM over falling A density, with and without
/// the operand collector.
#[wasm_bindgen]
pub fn speedup_curve(size: usize, b_density: f64, seed: u32) -> String {
    to_json(curve_impl(size, b_density, seed as u64))
}
