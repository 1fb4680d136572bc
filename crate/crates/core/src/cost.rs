//! Cycle cost model of the outer-product tensor core.
//!
//! Instruction side: every executed 32×32×1 set issues one BOHMMA plus the
//! OHMMA sub-steps that survive predication; warp-skipped sets issue nothing.
//! Accumulation side: every partial product is split into its OHMMA
//! instructions, each contributing one write-accumulate access per set bit of
//! the product bitmap it covers, and the access stream is scheduled onto a
//! banked buffer.

use std::collections::VecDeque;
use std::io::Write;

use crate::bits::lane_ones;
use crate::codec::{A_STEP, B_STEP, MAX_LANE};
use crate::error::{Error, Result};
use crate::codec::TwoLevelBitmapMatrix;
use crate::matrix::DenseMatrix;
use crate::spconv::{spconv_with, ConvProblem, ConvStats};
use crate::spgemm::{
    device_spgemm_with, DeviceConfig, PartialObserver, PartialProduct, StepTrace, TraceSummary,
};

#[derive(Clone, Debug, PartialEq)]
pub struct CostConfig {
    pub ohmma_issue_per_cycle: u64,
    pub pipeline_depth: u64,
    pub acc_ports: usize,
    pub acc_banks: usize,
    /// Bytes; one f32 cell per 4 bytes.
    pub acc_capacity: usize,
    /// Pending-access slots the operand collector looks ahead.
    pub oc_window: usize,
    pub bohmma_cost: u64,
    /// Issue cycles charged for each predicated-off OHMMA.
    pub skipped_issue_cost: u64,
    pub use_operand_collector: bool,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            ohmma_issue_per_cycle: 1,
            pipeline_depth: 4,
            acc_ports: 16,
            acc_banks: 16,
            acc_capacity: MAX_LANE * MAX_LANE * 4,
            oc_window: 32,
            bohmma_cost: 1,
            skipped_issue_cost: 0,
            use_operand_collector: true,
        }
    }
}

impl CostConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("ohmma_issue_per_cycle", self.ohmma_issue_per_cycle as usize),
            ("acc_ports", self.acc_ports),
            ("acc_banks", self.acc_banks),
            ("oc_window", self.oc_window),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.acc_capacity < 4 || !self.acc_capacity.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "accumulation capacity {} is not a whole number of f32 cells",
                self.acc_capacity
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.acc_capacity / 4
    }

    #[inline]
    pub fn bank(&self, cell: usize) -> usize {
        cell % self.acc_banks
    }
}

/// Instruction counts of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct InstructionCounts {
    pub ohmma_issued: u64,
    /// Sub-steps of executed sets turned off by predication.
    pub ohmma_predicated_off: u64,
    /// Sub-steps of sets skipped whole by a clear warp bit.
    pub ohmma_warp_skipped: u64,
    pub bohmma_issued: u64,
}

impl InstructionCounts {
    pub fn ohmma_skipped(&self) -> u64 {
        self.ohmma_predicated_off + self.ohmma_warp_skipped
    }

    pub fn baseline_ohmma(&self) -> u64 {
        self.ohmma_issued + self.ohmma_skipped()
    }
}

pub fn count_instructions(summary: &TraceSummary) -> InstructionCounts {
    let per_set = summary.substeps_per_set();
    let live_sets = summary.sets - summary.warp_skipped_sets;
    InstructionCounts {
        ohmma_issued: summary.executed_substeps,
        ohmma_predicated_off: live_sets * per_set - summary.executed_substeps,
        ohmma_warp_skipped: summary.warp_skipped_sets * per_set,
        bohmma_issued: live_sets,
    }
}

/// Accumulation buffer operating mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AccMode {
    /// Fixed conflict-free port mapping over whole output rows.
    Dense,
    /// Arbitrary positions; one access per bank per cycle.
    Sparse,
}

/// Accumulator cells touched by each OHMMA instruction of `partial`, in
/// instruction order. Instruction `(i, j)` covers condensed rows
/// `8i..8i+8` and condensed columns `16j..16j+16`; instructions without set
/// bits are left out.
pub fn access_groups(partial: &PartialProduct) -> Result<Vec<Vec<u16>>> {
    let (a_bits, b_bits) = partial.checked_factors()?;
    let rows: Vec<usize> = lane_ones(a_bits).collect();
    let cols: Vec<usize> = lane_ones(b_bits).collect();
    let mut groups = Vec::new();
    for rchunk in rows.chunks(A_STEP) {
        for cchunk in cols.chunks(B_STEP) {
            let mut g = Vec::with_capacity(rchunk.len() * cchunk.len());
            for &r in rchunk {
                for &c in cchunk {
                    g.push((r * MAX_LANE + c) as u16);
                }
            }
            groups.push(g);
        }
    }
    Ok(groups)
}

#[derive(Clone, Copy, Debug)]
struct Pending {
    instr: u64,
    bank: u32,
}

/// Streaming accumulation-buffer simulator. Groups (one per instruction) are
/// pushed in issue order; cycles are resolved as soon as later arrivals can no
/// longer change them.
#[derive(Clone, Debug)]
pub struct AccumulationSim {
    cfg: CostConfig,
    mode: AccMode,
    queue: VecDeque<Pending>,
    next_instr: u64,
    accesses: u64,
    cycles: u64,
    bank_load: Vec<u64>,
    stamp: Vec<u64>,
}

impl AccumulationSim {
    pub fn new(cfg: &CostConfig, mode: AccMode) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            mode,
            queue: VecDeque::new(),
            next_instr: 0,
            accesses: 0,
            cycles: 0,
            bank_load: vec![0; cfg.acc_banks],
            stamp: vec![u64::MAX; cfg.acc_banks],
        })
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    /// Per-bank access totals so far.
    pub fn bank_load(&self) -> &[u64] {
        &self.bank_load
    }

    pub fn push_group(&mut self, cells: &[u16]) -> Result<()> {
        let limit = self.cfg.cells();
        if let Some(&bad) = cells.iter().find(|&&c| c as usize >= limit) {
            return Err(Error::Bounds {
                cell: bad as usize,
                cells: limit,
            });
        }
        if cells.is_empty() {
            return Ok(());
        }
        self.accesses += cells.len() as u64;
        for &c in cells {
            self.bank_load[self.cfg.bank(c as usize)] += 1;
        }
        if self.mode == AccMode::Dense {
            return Ok(());
        }
        let instr = self.next_instr;
        self.next_instr += 1;
        if !self.cfg.use_operand_collector && self.cfg.acc_ports >= self.cfg.acc_banks {
            // arrival-order greedy takes one access from every busy bank per
            // cycle, so the instruction drains in its max bank load
            let mut load = vec![0u32; self.cfg.acc_banks];
            for &c in cells {
                load[self.cfg.bank(c as usize)] += 1;
            }
            self.cycles += *load.iter().max().unwrap() as u64;
            return Ok(());
        }
        self.queue.extend(cells.iter().map(|&c| Pending {
            instr,
            bank: self.cfg.bank(c as usize) as u32,
        }));
        self.drain(false);
        Ok(())
    }

    pub fn push_partial(&mut self, partial: &PartialProduct) -> Result<()> {
        for g in access_groups(partial)? {
            self.push_group(&g)?;
        }
        Ok(())
    }

    /// Total accumulation cycles.
    pub fn finish(mut self) -> u64 {
        match self.mode {
            AccMode::Dense => self.accesses.div_ceil(self.cfg.acc_ports as u64),
            AccMode::Sparse => {
                self.drain(true);
                self.cycles
            }
        }
    }

    fn head_len(&self) -> usize {
        let Some(head) = self.queue.front() else {
            return 0;
        };
        self.queue.iter().take_while(|p| p.instr == head.instr).count()
    }

    fn drain(&mut self, all: bool) {
        loop {
            if self.queue.is_empty() {
                return;
            }
            let lookahead = if self.cfg.use_operand_collector { self.cfg.oc_window } else { 0 };
            if !all && self.queue.len() <= self.head_len() + lookahead {
                // a later arrival could still join this cycle's window
                return;
            }
            self.step();
        }
    }

    fn step(&mut self) {
        let cycle = self.cycles;
        let head = self.queue[0].instr;
        let window = if self.cfg.use_operand_collector { self.cfg.oc_window } else { 0 };
        let mut picked = 0usize;
        let mut seen_after_head = 0usize;
        let mut keep = VecDeque::with_capacity(self.queue.len());
        let mut scanning = true;
        while let Some(p) = self.queue.pop_front() {
            if scanning && p.instr != head {
                seen_after_head += 1;
                if seen_after_head > window {
                    scanning = false;
                }
            }
            let bank = p.bank as usize;
            if scanning && picked < self.cfg.acc_ports && self.stamp[bank] != cycle {
                self.stamp[bank] = cycle;
                picked += 1;
                continue;
            }
            keep.push_back(p);
            if !scanning {
                keep.extend(self.queue.drain(..));
                break;
            }
        }
        self.queue = keep;
        self.cycles += 1;
    }
}

/// Accumulation cycles of an ordered partial-product stream.
pub fn simulate_accumulation<'a>(
    partials: impl IntoIterator<Item = &'a PartialProduct>,
    mode: AccMode,
    cfg: &CostConfig,
) -> Result<u64> {
    let mut sim = AccumulationSim::new(cfg, mode)?;
    for p in partials {
        sim.push_partial(p)?;
    }
    Ok(sim.finish())
}

/// Same as [`simulate_accumulation`] over raw access groups.
pub fn simulate_groups<G: AsRef<[u16]>>(groups: &[G], mode: AccMode, cfg: &CostConfig) -> Result<u64> {
    let mut sim = AccumulationSim::new(cfg, mode)?;
    for g in groups {
        sim.push_group(g.as_ref())?;
    }
    Ok(sim.finish())
}

/// Per-tile observer feeding a device run into an accumulation simulator.
/// Errors are held until [`finish`](Self::finish).
#[derive(Debug)]
pub struct AccumulationObserver {
    sim: AccumulationSim,
    error: Option<Error>,
}

impl AccumulationObserver {
    pub fn new(cfg: &CostConfig, mode: AccMode) -> Result<Self> {
        Ok(Self {
            sim: AccumulationSim::new(cfg, mode)?,
            error: None,
        })
    }

    pub fn finish(self) -> Result<u64> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.sim.finish()),
        }
    }
}

impl PartialObserver for AccumulationObserver {
    fn observe(&mut self, _k: usize, partial: &PartialProduct) {
        if self.error.is_none() {
            if let Err(e) = self.sim.push_partial(partial) {
                self.error = Some(e);
            }
        }
    }
}

/// Sum of per-tile accumulation cycles.
pub fn finish_observers(observers: Vec<AccumulationObserver>) -> Result<u64> {
    observers.into_iter().map(AccumulationObserver::finish).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostReport {
    pub scenario: String,
    pub ohmma_issued: u64,
    /// Predicated-off plus warp-skipped.
    pub ohmma_skipped: u64,
    pub bohmma_issued: u64,
    pub issue_cycles: u64,
    pub accumulation_cycles: u64,
    pub total_cycles: u64,
    pub baseline_cycles: u64,
    pub speedup: f64,
}

pub const COST_CSV_HEADER: &str = "scenario,ohmma_issued,ohmma_skipped,bohmma_issued,issue_cycles,accumulation_cycles,total_cycles,baseline_cycles,speedup";

impl CostReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6}",
            csv_field(&self.scenario),
            self.ohmma_issued,
            self.ohmma_skipped,
            self.bohmma_issued,
            self.issue_cycles,
            self.accumulation_cycles,
            self.total_cycles,
            self.baseline_cycles,
            self.speedup
        )
    }

    pub fn write_csv<'a>(
        reports: impl IntoIterator<Item = &'a CostReport>,
        w: &mut impl Write,
    ) -> std::io::Result<()> {
        writeln!(w, "{COST_CSV_HEADER}")?;
        for r in reports {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Issue cycles of a set of instruction counts.
pub fn issue_cycles(counts: &InstructionCounts, cfg: &CostConfig) -> u64 {
    let slots = counts.ohmma_issued
        + counts.ohmma_predicated_off * cfg.skipped_issue_cost
        + counts.bohmma_issued * cfg.bohmma_cost;
    slots.div_ceil(cfg.ohmma_issue_per_cycle)
}

/// Cycles of the same problem with every skip disabled: 8 OHMMA and one
/// BOHMMA per set, dense-mode accumulation of every tile cell per set.
pub fn baseline_cycles(summary: &TraceSummary, cfg: &CostConfig) -> u64 {
    let per_set = summary.substeps_per_set();
    let issue = (summary.sets * (per_set + cfg.bohmma_cost)).div_ceil(cfg.ohmma_issue_per_cycle);
    let cells = (summary.tile_rows * summary.tile_cols) as u64;
    let acc = match summary.sets.checked_div(summary.tiles) {
        Some(sets_per_tile) => summary.tiles * (sets_per_tile * cells).div_ceil(cfg.acc_ports as u64),
        None => 0,
    };
    issue.max(acc) + cfg.pipeline_depth
}

/// Compose instruction counts and accumulation cycles into a report.
pub fn total_cost(
    scenario: &str,
    summary: &TraceSummary,
    accumulation_cycles: u64,
    cfg: &CostConfig,
) -> CostReport {
    let counts = count_instructions(summary);
    let issue = issue_cycles(&counts, cfg);
    let total = issue.max(accumulation_cycles) + cfg.pipeline_depth;
    let baseline = baseline_cycles(summary, cfg);
    CostReport {
        scenario: scenario.to_string(),
        ohmma_issued: counts.ohmma_issued,
        ohmma_skipped: counts.ohmma_skipped(),
        bohmma_issued: counts.bohmma_issued,
        issue_cycles: issue,
        accumulation_cycles,
        total_cycles: total,
        baseline_cycles: baseline,
        speedup: baseline as f64 / total as f64,
    }
}

/// Sparse-mode cost of `A × B + C` under `device`.
pub fn gemm_cost(
    scenario: &str,
    a: &TwoLevelBitmapMatrix,
    b: &TwoLevelBitmapMatrix,
    c: Option<&DenseMatrix>,
    device: &DeviceConfig,
    cfg: &CostConfig,
) -> Result<(DenseMatrix, StepTrace, CostReport)> {
    cfg.validate()?;
    let make = |_, _| AccumulationObserver::new(cfg, AccMode::Sparse).expect("config validated");
    let run = device_spgemm_with(a, b, c, device, make)?;
    let acc = finish_observers(run.observers)?;
    let report = total_cost(scenario, run.trace.summary(), acc, cfg);
    Ok((run.output, run.trace, report))
}

/// Sparse-mode cost of a convolution in the problem's mode.
pub fn conv_cost(
    scenario: &str,
    problem: &ConvProblem,
    cfg: &CostConfig,
) -> Result<(DenseMatrix, StepTrace, ConvStats, CostReport)> {
    cfg.validate()?;
    let make = |_, _| AccumulationObserver::new(cfg, AccMode::Sparse).expect("config validated");
    let run = spconv_with(problem, false, make)?;
    let acc = finish_observers(run.observers)?;
    let report = total_cost(scenario, run.trace.summary(), acc, cfg);
    Ok((run.output, run.trace, run.stats, report))
}
