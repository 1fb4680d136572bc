use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use dstc::cost::CostReport;
use dstc::gen::RNG_ALGORITHM;

use crate::run::{Im2colRow, KernelRow, RowResult};

pub const REPORT_HEADER: [&str; 27] = [
    "scenario",
    "kind",
    "repetition",
    "seed",
    "mode",
    "m",
    "n",
    "k",
    "a_density",
    "b_density",
    "a_nnz",
    "b_nnz",
    "oracle",
    "rel_frobenius_error",
    "max_rel_error",
    "executed_substeps",
    "baseline_substeps",
    "warp_skipped_sets",
    "ohmma_issued",
    "ohmma_skipped",
    "bohmma_issued",
    "issue_cycles",
    "accumulation_cycles",
    "total_cycles",
    "baseline_cycles",
    "speedup",
    "step_speedup",
];

pub const IM2COL_HEADER: [&str; 11] = [
    "scenario",
    "repetition",
    "seed",
    "lowered_rows",
    "lowered_cols",
    "path",
    "value_reads",
    "index_reads",
    "bitmap_word_reads",
    "offset_computations",
    "data_dependent_reads",
];

fn mode_name(m: dstc::spconv::ConvMode) -> &'static str {
    match m {
        dstc::spconv::ConvMode::Dense => "dense",
        dstc::spconv::ConvMode::SingleSparse => "single",
        dstc::spconv::ConvMode::DualSparse => "dual",
    }
}

fn ratio(num: u64, den: u64) -> String {
    if den == 0 {
        "1.000000".into()
    } else {
        format!("{:.6}", num as f64 / den as f64)
    }
}

fn kernel_record(r: &KernelRow) -> Vec<String> {
    let c = &r.cost;
    vec![
        r.scenario.clone(),
        r.kind.into(),
        r.repetition.to_string(),
        r.seed.to_string(),
        mode_name(r.mode).into(),
        r.m.to_string(),
        r.n.to_string(),
        r.k.to_string(),
        r.a_density.to_string(),
        r.b_density.to_string(),
        r.a_nnz.to_string(),
        r.b_nnz.to_string(),
        if r.oracle.passed { "pass" } else { "fail" }.into(),
        format!("{:.3e}", r.oracle.rel_frobenius_error),
        format!("{:.3e}", r.oracle.max_rel_error),
        r.executed_substeps.to_string(),
        r.baseline_substeps.to_string(),
        r.warp_skipped_sets.to_string(),
        c.ohmma_issued.to_string(),
        c.ohmma_skipped.to_string(),
        c.bohmma_issued.to_string(),
        c.issue_cycles.to_string(),
        c.accumulation_cycles.to_string(),
        c.total_cycles.to_string(),
        c.baseline_cycles.to_string(),
        format!("{:.6}", c.speedup),
        ratio(r.baseline_substeps, r.executed_substeps),
    ]
}

fn im2col_records(r: &Im2colRow) -> impl Iterator<Item = Vec<String>> + '_ {
    r.paths.iter().map(move |p| {
        vec![
            r.scenario.clone(),
            r.repetition.to_string(),
            r.seed.to_string(),
            r.lowered_rows.to_string(),
            r.lowered_cols.to_string(),
            p.path.into(),
            p.value_reads.to_string(),
            p.index_reads.to_string(),
            p.bitmap_word_reads.to_string(),
            p.offset_computations.to_string(),
            p.data_dependent_reads.to_string(),
        ]
    })
}

fn write_table<W: Write>(
    mut w: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    writeln!(w, "# rng={RNG_ALGORITHM}")?;
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(header)?;
    for r in rows {
        csv.write_record(&r)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_report<W: Write>(w: W, rows: &[RowResult]) -> Result<()> {
    let kernels = rows.iter().filter_map(|r| match r {
        RowResult::Kernel(k) => Some(kernel_record(k)),
        RowResult::Im2col(_) => None,
    });
    write_table(w, &REPORT_HEADER, kernels)
}

pub fn write_im2col<W: Write>(w: W, rows: &[RowResult]) -> Result<()> {
    let recs: Vec<Vec<String>> = rows
        .iter()
        .filter_map(|r| match r {
            RowResult::Im2col(i) => Some(i),
            RowResult::Kernel(_) => None,
        })
        .flat_map(|r| im2col_records(r))
        .collect();
    write_table(w, &IM2COL_HEADER, recs)
}

/// Long-format `(scenario, x, series, y)` rows, one file per figure.
pub fn plot_tables(rows: &[RowResult]) -> Vec<(&'static str, Vec<[String; 4]>)> {
    let (mut gemm, mut conv, mut steps, mut im2col) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for r in rows {
        match r {
            RowResult::Kernel(k) if k.kind == "gemm" => {
                let series = format!("b_density={}", k.b_density);
                gemm.push([k.scenario.clone(), k.a_density.to_string(), series.clone(), format!("{:.6}", k.cost.speedup)]);
                steps.push([k.scenario.clone(), k.a_density.to_string(), series, ratio(k.baseline_substeps, k.executed_substeps)]);
            }
            RowResult::Kernel(k) => {
                conv.push([k.scenario.clone(), k.scenario.clone(), mode_name(k.mode).into(), format!("{:.6}", k.cost.speedup)]);
            }
            RowResult::Im2col(i) => {
                for p in &i.paths {
                    im2col.push([i.scenario.clone(), p.path.into(), "data_dependent_reads".into(), p.data_dependent_reads.to_string()]);
                    im2col.push([i.scenario.clone(), p.path.into(), "value_reads".into(), p.value_reads.to_string()]);
                }
            }
        }
    }
    [("gemm_speedup", gemm), ("gemm_step_speedup", steps), ("conv_speedup", conv), ("im2col_reads", im2col)]
        .into_iter()
        .filter(|(_, rows)| !rows.is_empty())
        .collect()
}

/// Write `report.csv`, `cost.csv`, `traces.csv`, `im2col.csv` and, on request,
/// per-run step traces and plot tables into `dir`.
pub fn write_outputs(dir: &Path, rows: &[RowResult], plot_data: bool) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let create = |name: &str| {
        let p = dir.join(name);
        fs::File::create(&p).with_context(|| format!("creating {}", p.display()))
    };
    let kernels: Vec<&KernelRow> = rows
        .iter()
        .filter_map(|r| match r {
            RowResult::Kernel(k) => Some(k.as_ref()),
            RowResult::Im2col(_) => None,
        })
        .collect();
    if !kernels.is_empty() {
        write_report(create("report.csv")?, rows)?;
        let costs: Vec<CostReport> = kernels
            .iter()
            .map(|k| CostReport {
                scenario: format!("{}#{}", k.scenario, k.repetition),
                ..k.cost.clone()
            })
            .collect();
        CostReport::write_csv(&costs, &mut create("cost.csv")?)?;
        let summaries = kernels.iter().map(|k| {
            vec![
                k.scenario.clone(),
                k.repetition.to_string(),
                k.executed_substeps.to_string(),
                k.baseline_substeps.to_string(),
                k.warp_skipped_sets.to_string(),
            ]
        });
        write_table(
            create("traces.csv")?,
            &["scenario", "repetition", "executed_substeps", "baseline_substeps", "warp_skipped_sets"],
            summaries,
        )?;
        for k in &kernels {
            if let Some(t) = &k.trace {
                let tdir = dir.join("traces");
                fs::create_dir_all(&tdir)?;
                let name = format!("{}_r{}.csv", sanitize(&k.scenario), k.repetition);
                t.write_csv(&mut fs::File::create(tdir.join(name))?)?;
            }
        }
    }
    if rows.iter().any(|r| matches!(r, RowResult::Im2col(_))) {
        write_im2col(create("im2col.csv")?, rows)?;
    }
    if plot_data {
        for (figure, table) in plot_tables(rows) {
            let recs = table.into_iter().map(|r| r.to_vec());
            write_table(create(&format!("plot_{figure}.csv"))?, &["scenario", "x", "series", "y"], recs)?;
        }
    }
    Ok(())
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}
