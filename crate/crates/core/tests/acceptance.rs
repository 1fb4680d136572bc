//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::time::{Duration, Instant};

use dstc::bits::lane_ones;
use dstc::codec::{CondensedLane, QuantumLevels, Side, TwoLevelBitmapMatrix, ValueOrder};
use dstc::cost::{
    count_instructions, gemm_cost, simulate_groups, AccMode, CostConfig,
};
use dstc::gen;
use dstc::im2col::{dense_im2col_outer, lowered_dims, sparse_im2col_bitmap, values_per_row, ConvShape};
use dstc::reference;
use dstc::spconv::{spconv, ConvMode, ConvProblem};
use dstc::spgemm::{device_spgemm, device_spgemm_with, warp_spgemm, Accumulator, DeviceConfig};
use dstc::DenseMatrix;
use rand::seq::IndexedRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    check(elapsed.as_secs_f64() <= limit_s as f64, || {
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

const DENSITIES: [f64; 6] = [1.0, 0.75, 0.5, 0.25, 0.1, 0.01];

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let dims = [32, 64, 96, 128];
    let mut rng = gen::rng(0x5eed_0001);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let (m, n, k) = (*dims.choose(&mut rng).unwrap(), *dims.choose(&mut rng).unwrap(), *dims.choose(&mut rng).unwrap());
        let (da, db) = (*DENSITIES.choose(&mut rng).unwrap(), *DENSITIES.choose(&mut rng).unwrap());
        let a = gen::sparse_matrix(m, k, da, &mut rng).unwrap();
        let b = gen::sparse_matrix(k, n, db, &mut rng).unwrap();
        let ea = TwoLevelBitmapMatrix::encode_lhs(&a).unwrap();
        let eb = TwoLevelBitmapMatrix::encode_rhs(&b).unwrap();
        let (out, _) = device_spgemm(&ea, &eb, None).map_err(|e| format!("case {case}: {e}"))?;
        let err = out.relative_frobenius_error(&reference::gemm(&a, &b, None).unwrap()).unwrap();
        worst = worst.max(err);
        check(err <= 1e-5, || format!("case {case} ({m}x{n}x{k}, {da}/{db}): error {err:e}"))?;
    }
    within(start.elapsed(), 60)?;
    Ok(format!("200 cases, max relative error {worst:.2e}, {:.1}s", start.elapsed().as_secs_f64()))
}

fn random_conv_shape(rng: &mut impl Rng) -> ConvShape {
    loop {
        let k = *[1usize, 3, 5].choose(rng).unwrap();
        let s = rng.random_range(1..=2);
        let (h, w) = (rng.random_range(k..=32), rng.random_range(k..=32));
        let (c, n) = (rng.random_range(1..=16), rng.random_range(1..=16));
        if values_per_row(w, k, s).is_ok() {
            return ConvShape::new(h, w, c, k, k, s, n).unwrap();
        }
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = gen::rng(0x5eed_0002);
    let mut worst = 0.0f64;
    for layer in 0..50 {
        let shape = random_conv_shape(&mut rng);
        let (da, dw) = (*DENSITIES.choose(&mut rng).unwrap(), *DENSITIES.choose(&mut rng).unwrap());
        let map = gen::feature_map(shape.height(), shape.width(), shape.channels(), da, &mut rng).unwrap();
        let f = gen::filters(shape.filters(), shape.kernel_h(), shape.kernel_w(), shape.channels(), dw, &mut rng).unwrap();
        let expect = reference::conv2d(&map, &f, &shape).unwrap();
        let mut steps = Vec::new();
        for mode in [ConvMode::Dense, ConvMode::SingleSparse, ConvMode::DualSparse] {
            let p = ConvProblem::from_dense(shape, &map, &f, mode).unwrap();
            let (out, trace) = spconv(&p).map_err(|e| format!("layer {layer}: {e}"))?;
            let err = out.relative_frobenius_error(&expect).unwrap();
            worst = worst.max(err);
            check(err <= 1e-5, || format!("layer {layer} {shape:?} {mode:?}: error {err:e}"))?;
            steps.push(trace.summary().executed_substeps);
        }
        check(steps[2] <= steps[1] && steps[1] <= steps[0], || {
            format!("layer {layer}: step counts {steps:?} not ordered")
        })?;
    }
    within(start.elapsed(), 120)?;
    Ok(format!("50 layers x 3 modes, max relative error {worst:.2e}, {:.1}s", start.elapsed().as_secs_f64()))
}

fn spread_bits(count: u32, mul: u32) -> u32 {
    (0..32).filter(|p| (p * mul) % 32 < count).fold(0, |acc, p| acc | 1 << p)
}

fn criterion_3() -> Outcome {
    let (a_bits, b_bits) = (spread_bits(20, 7), spread_bits(11, 5));
    check(a_bits.count_ones() == 20 && b_bits.count_ones() == 11, || "bad fixture".into())?;
    let a_levels = QuantumLevels::for_side(Side::A, 32);
    let b_levels = QuantumLevels::for_side(Side::B, 32);
    let a = CondensedLane::new(a_bits, vec![1.0; 20], &a_levels).unwrap();
    let b = CondensedLane::new(b_bits, vec![1.0; 11], &b_levels).unwrap();
    check((a.padded_len(), b.padded_len()) == (24, 16), || {
        format!("padded to {}/{}", a.padded_len(), b.padded_len())
    })?;
    let mut acc = Accumulator::zeros(32, 32);
    let trace = warp_spgemm(&[a], &[b], &mut acc).unwrap();
    let rec = trace.records().unwrap()[0];
    check((rec.executed_substeps, rec.baseline_substeps) == (3, 8), || {
        format!("executed {} of {}", rec.executed_substeps, rec.baseline_substeps)
    })?;

    // Instruction-bound configuration: BOHMMA folded into the set and an
    // accumulation buffer wide enough never to bind.
    let theory = CostConfig {
        bohmma_cost: 0,
        acc_ports: 1024,
        acc_banks: 1024,
        oc_window: 1024,
        ..CostConfig::default()
    };
    let target = 8.0 / 3.0;
    let mut parts = Vec::new();
    for k in [64usize, 128, 256] {
        let ad = DenseMatrix::from_fn(32, k, |r, _| if a_bits >> r & 1 == 1 { 1.0 } else { 0.0 });
        let bd = DenseMatrix::from_fn(k, 32, |_, c| if b_bits >> c & 1 == 1 { 1.0 } else { 0.0 });
        let (ea, eb) = (TwoLevelBitmapMatrix::encode_lhs(&ad).unwrap(), TwoLevelBitmapMatrix::encode_rhs(&bd).unwrap());
        let (_, _, r) = gemm_cost("worked", &ea, &eb, None, &DeviceConfig::default(), &theory).unwrap();
        let rel = (r.speedup - target).abs() / target;
        check(rel <= 0.02, || format!("K={k}: speedup {:.4} is {:.2}% from 8/3", r.speedup, rel * 100.0))?;
        parts.push(format!("K={k} {:.4}", r.speedup));
        if k == 64 {
            let (_, _, d) = gemm_cost("worked", &ea, &eb, None, &DeviceConfig::default(), &CostConfig::default()).unwrap();
            parts.push(format!("(default config, accumulation-bound: {:.4})", d.speedup));
        }
    }
    Ok(format!("24/16 padding, 3 of 8 sub-steps; speedup {}", parts.join(", ")))
}

fn dense_values(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = gen::rng(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| gen::nonzero_value(&mut rng))
}

fn criterion_4() -> Outcome {
    let cfg = CostConfig::default();
    let a = TwoLevelBitmapMatrix::encode(&dense_values(16, 16, 1), 16, 16, ValueOrder::ColumnMajor).unwrap();
    let b = TwoLevelBitmapMatrix::encode(&dense_values(16, 16, 2), 16, 16, ValueOrder::RowMajor).unwrap();
    let (_, _, r) = gemm_cost("owmma", &a, &b, None, &DeviceConfig::default(), &cfg).unwrap();
    let ohmma_cycles = r.ohmma_issued.div_ceil(cfg.ohmma_issue_per_cycle);
    check(ohmma_cycles == 32, || format!("16x16x16 tile: {ohmma_cycles} OHMMA-issue cycles"))?;
    check(r.speedup == 1.0, || format!("16x16x16 tile: speedup {}", r.speedup))?;
    for (m, n, k) in [(32, 32, 32), (64, 96, 128), (128, 32, 64), (96, 128, 32)] {
        let a = TwoLevelBitmapMatrix::encode_lhs(&dense_values(m, k, 3)).unwrap();
        let b = TwoLevelBitmapMatrix::encode_rhs(&dense_values(k, n, 4)).unwrap();
        let (_, _, r) = gemm_cost("dense", &a, &b, None, &DeviceConfig::default(), &cfg).unwrap();
        let expect = (m / 8 * (n / 16) * k) as u64;
        check(r.ohmma_issued == expect && r.ohmma_skipped == 0, || {
            format!("{m}x{n}x{k}: issued {} skipped {}, expected {expect}", r.ohmma_issued, r.ohmma_skipped)
        })?;
        check(r.speedup == 1.0, || format!("{m}x{n}x{k}: speedup {}", r.speedup))?;
    }
    Ok("16x16x16 tile = 32 OHMMA cycles; (M/8)(N/16)K OHMMA on 4 shapes; speedup 1.0".into())
}

fn criterion_5() -> Outcome {
    let mut rng = gen::rng(0x5eed_0005);
    let mut lanes_checked = 0usize;
    for case in 0..100 {
        let density = rng.random_range(0.02..=0.9);
        let shape = loop {
            let k = *[1usize, 2, 3, 5].choose(&mut rng).unwrap();
            let s = rng.random_range(1..=3);
            let (h, w) = (rng.random_range(k..=20), rng.random_range(k..=40));
            if values_per_row(w, k, s).is_ok() {
                break ConvShape::new(h, w, rng.random_range(1..=4), k, k, s, 1).unwrap();
            }
        };
        let map = gen::feature_map(shape.height(), shape.width(), shape.channels(), density, &mut rng).unwrap();
        let dense = dense_im2col_outer(&map, &shape).unwrap().to_dense();
        let enc = map.encode_channels().unwrap();
        let stream = sparse_im2col_bitmap(&enc, &shape, 32).unwrap();
        let rows = lowered_dims(&shape).0;
        for lane in stream.lanes() {
            let expanded = lane.expand(32);
            for (i, v) in expanded.iter().enumerate() {
                let r = lane.row_tile * 32 + i;
                let expect = if r < rows { dense.get(r, lane.column) } else { 0.0 };
                check(*v == expect, || format!("case {case}: lane ({}, {}) row {i}", lane.row_tile, lane.column))?;
            }
            let (_, kw, _) = shape.column_tap(lane.column);
            for seg in &lane.segments {
                let row = map.channel(seg.channel);
                let prefix = (0..kw).filter(|&x| row.get(seg.map_row, x) != 0.0).count();
                check(seg.offset == prefix, || {
                    format!("case {case}: column {} offset {} != prefix popcount {prefix}", lane.column, seg.offset)
                })?;
            }
            check(lane_ones(lane.bits).count() == lane.values.len(), || format!("case {case}: count"))?;
            lanes_checked += 1;
        }
    }
    Ok(format!("100 maps, {lanes_checked} lanes exact, offsets equal prefix popcounts"))
}

fn criterion_6() -> Outcome {
    // (a) zero tiles in a 96x96x96 problem: A tile (0,1) and B tile (2,0) empty
    let mut rng = gen::rng(0x5eed_0006);
    let mut a = gen::sparse_matrix(96, 96, 0.5, &mut rng).unwrap();
    let mut b = gen::sparse_matrix(96, 96, 0.5, &mut rng).unwrap();
    for r in 0..32 {
        for c in 32..64 {
            a.set(r, c, 0.0);
        }
    }
    for r in 64..96 {
        for c in 0..32 {
            b.set(r, c, 0.0);
        }
    }
    let (ea, eb) = (TwoLevelBitmapMatrix::encode_lhs(&a).unwrap(), TwoLevelBitmapMatrix::encode_rhs(&b).unwrap());
    let cfg = DeviceConfig {
        keep_records: true,
        ..DeviceConfig::default()
    };
    let run = device_spgemm_with(&ea, &eb, None, &cfg, |_, _| ()).unwrap();
    let mut zero_pairs = 0;
    for rec in run.trace.records().unwrap() {
        let kt = rec.k_index / 32;
        let empty = (rec.tile_row == 0 && kt == 1) || (kt == 2 && rec.tile_col == 0);
        if empty {
            zero_pairs += 1;
            check(rec.skipped_by_warp_bit && rec.executed_substeps == 0, || format!("{rec:?} not skipped"))?;
        }
    }
    let counts = count_instructions(run.trace.summary());
    let s = run.trace.summary();
    check(counts.bohmma_issued == s.sets - s.warp_skipped_sets && s.warp_skipped_sets == zero_pairs, || {
        format!("bohmma {} for {} live sets", counts.bohmma_issued, s.sets - s.warp_skipped_sets)
    })?;

    // (b) clustered 99.9%-sparse 1024x1024 fixture
    let nnz_target = (1024.0 * 1024.0 * 0.001f64).round();
    let tiles = 32;
    let density = nnz_target / (tiles as f64 * 1024.0);
    let m = gen::clustered_matrix(1024, 1024, 32, tiles, density, &mut rng).unwrap();
    let sparsity = 1.0 - m.nnz() as f64 / (1024.0 * 1024.0);
    check((0.9985..=0.9995).contains(&sparsity), || format!("fixture sparsity {sparsity}"))?;
    let enc = TwoLevelBitmapMatrix::encode_lhs(&m).unwrap();
    let empty = enc.empty_tile_fraction();
    check(empty >= 0.8, || format!("empty warp fraction {empty}"))?;
    let rhs = TwoLevelBitmapMatrix::encode_rhs(&gen::sparse_matrix(1024, 128, 0.5, &mut rng).unwrap()).unwrap();
    let (_, trace) = device_spgemm(&enc, &rhs, None).unwrap();
    let s = trace.summary();
    let skipped = s.warp_skipped_sets as f64 / s.sets as f64;
    check(skipped >= 0.8, || format!("warp-skipped set fraction {skipped}"))?;
    Ok(format!(
        "{zero_pairs} zero tile-pair sets skipped with no BOHMMA; {:.4} sparse fixture: {:.1}% empty warps, {:.1}% sets warp-skipped",
        sparsity,
        empty * 100.0,
        skipped * 100.0
    ))
}

fn criterion_7() -> Outcome {
    let mut rng = gen::rng(0x5eed_0007);
    let with = CostConfig::default();
    let without = CostConfig {
        use_operand_collector: false,
        ..CostConfig::default()
    };
    let mut gain = 0u64;
    for t in 0..1000 {
        let instrs = rng.random_range(1..=12);
        // skew some traces onto a few banks to force conflicts
        let hot = rng.random_range(1..=16u16);
        let groups: Vec<Vec<u16>> = (0..instrs)
            .map(|_| {
                let len = rng.random_range(1..=128);
                (0..len)
                    .map(|_| {
                        let row = rng.random_range(0..32u16);
                        let col = if t % 2 == 0 { rng.random_range(0..32) } else { rng.random_range(0..hot) };
                        row * 32 + col
                    })
                    .collect()
            })
            .collect();
        let mut load = [0u64; 16];
        let mut accesses = 0u64;
        for g in &groups {
            for &c in g {
                load[c as usize % 16] += 1;
                accesses += 1;
            }
        }
        let bound = *load.iter().max().unwrap();
        let cw = simulate_groups(&groups, AccMode::Sparse, &with).unwrap();
        let cn = simulate_groups(&groups, AccMode::Sparse, &without).unwrap();
        check(cw <= cn, || format!("trace {t}: collector {cw} > {cn}"))?;
        check(cw >= bound && cn >= bound, || format!("trace {t}: {cw}/{cn} below bank bound {bound}"))?;
        let dense = simulate_groups(&groups, AccMode::Dense, &with).unwrap();
        check(dense == accesses.div_ceil(16), || format!("trace {t}: dense {dense} for {accesses} accesses"))?;
        gain += cn - cw;
    }
    Ok(format!("1000 traces; collector saved {gain} cycles in total"))
}

fn criterion_8() -> Outcome {
    let cfg = CostConfig::default();
    let mut steps = 0;
    for chain in 0..50u64 {
        let mut rng = gen::rng(0x5eed_0800 + chain);
        let d = [0.9, 0.6, 0.3, 0.1][chain as usize % 4];
        let mut a = gen::sparse_matrix(32, 64, d, &mut rng).unwrap();
        let mut b = gen::sparse_matrix(64, 64, d, &mut rng).unwrap();
        let mut last = u64::MAX;
        for step in 0..30 {
            let (ea, eb) = (TwoLevelBitmapMatrix::encode_lhs(&a).unwrap(), TwoLevelBitmapMatrix::encode_rhs(&b).unwrap());
            let (_, _, r) = gemm_cost("chain", &ea, &eb, None, &DeviceConfig::default(), &cfg).unwrap();
            check(r.total_cycles <= last, || {
                format!("chain {chain} step {step}: {} cycles after {last}", r.total_cycles)
            })?;
            last = r.total_cycles;
            steps += 1;
            for _ in 0..24 {
                if rng.random::<bool>() {
                    a.set(rng.random_range(0..32), rng.random_range(0..64), 0.0);
                } else {
                    b.set(rng.random_range(0..64), rng.random_range(0..64), 0.0);
                }
            }
        }
    }
    Ok(format!("50 chains, {steps} zeroing steps, total_cycles never increased"))
}

fn criterion_9() -> Outcome {
    // one global B row per reduction step, 128 wide, 80 nonzeros (37.5% sparse)
    let a = TwoLevelBitmapMatrix::encode_lhs(&dense_values(32, 32, 9)).unwrap();
    let even = DenseMatrix::from_fn(32, 128, |_, c| if c % 32 < 20 { 1.0 } else { 0.0 });
    // warps 0 and 2 full, warps 1 and 3 hold 8 nonzeros each
    let uneven = DenseMatrix::from_fn(32, 128, |_, c| if c / 32 % 2 == 0 || c % 32 < 8 { 1.0 } else { 0.0 });
    check(even.nnz() == uneven.nnz() && even.nnz() == 32 * 80, || "fixtures differ in nnz".into())?;
    let steps = |b: &DenseMatrix| {
        let (_, t) = device_spgemm(&a, &TwoLevelBitmapMatrix::encode_rhs(b).unwrap(), None).unwrap();
        t.summary().executed_substeps
    };
    let (e, u) = (steps(&even), steps(&uneven));
    check(u < e, || format!("concentrated {u} sub-steps vs even {e}"))?;
    Ok(format!("even spread {e} sub-steps, concentrated {u} ({:.2}x)", e as f64 / u as f64))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("SpGEMM oracle equivalence", criterion_1),
        ("SpCONV oracle equivalence", criterion_2),
        ("worked example 20/11 -> 3 of 8, 8/3 speedup", criterion_3),
        ("dense baseline", criterion_4),
        ("sparse im2col correctness", criterion_5),
        ("warp-bit skipping", criterion_6),
        ("accumulation scheduler", criterion_7),
        ("monotone total cycles", criterion_8),
        ("uneven distribution step count", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
