use std::io::Write;

use super::ohmma_substeps;

/// Sub-step accounting of one reduction step of one output tile.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub tile_row: usize,
    pub tile_col: usize,
    pub k_index: usize,
    pub executed_substeps: usize,
    pub baseline_substeps: usize,
    pub skipped_by_warp_bit: bool,
}

/// Aggregate counters over every reduction step of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceSummary {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Output tiles processed.
    pub tiles: u64,
    /// Reduction steps, warp-skipped ones included.
    pub sets: u64,
    pub warp_skipped_sets: u64,
    pub executed_substeps: u64,
}

impl TraceSummary {
    pub fn substeps_per_set(&self) -> u64 {
        ohmma_substeps(self.tile_rows, self.tile_cols) as u64
    }

    /// Sub-steps of a dense run of the same shape.
    pub fn baseline_substeps(&self) -> u64 {
        self.sets * self.substeps_per_set()
    }

    /// Dense sub-steps over executed sub-steps; 1.0 for an empty run.
    pub fn step_speedup(&self) -> f64 {
        if self.executed_substeps == 0 {
            if self.sets == 0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            self.baseline_substeps() as f64 / self.executed_substeps as f64
        }
    }

    pub fn absorb(&mut self, other: &TraceSummary) {
        debug_assert_eq!((self.tile_rows, self.tile_cols), (other.tile_rows, other.tile_cols));
        self.tiles += other.tiles;
        self.sets += other.sets;
        self.warp_skipped_sets += other.warp_skipped_sets;
        self.executed_substeps += other.executed_substeps;
    }
}

/// Per-step records (optional) plus the aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTrace {
    summary: TraceSummary,
    records: Option<Vec<StepRecord>>,
}

impl StepTrace {
    pub fn new(tile_rows: usize, tile_cols: usize, keep_records: bool) -> Self {
        Self {
            summary: TraceSummary {
                tile_rows,
                tile_cols,
                tiles: 0,
                sets: 0,
                warp_skipped_sets: 0,
                executed_substeps: 0,
            },
            records: keep_records.then(Vec::new),
        }
    }

    pub fn push(&mut self, rec: StepRecord) {
        self.summary.sets += 1;
        self.summary.executed_substeps += rec.executed_substeps as u64;
        if rec.skipped_by_warp_bit {
            self.summary.warp_skipped_sets += 1;
        }
        if let Some(r) = &mut self.records {
            r.push(rec);
        }
    }

    pub(crate) fn add_tiles(&mut self, n: u64) {
        self.summary.tiles += n;
    }

    pub fn summary(&self) -> &TraceSummary {
        &self.summary
    }

    pub fn records(&self) -> Option<&[StepRecord]> {
        self.records.as_deref()
    }

    /// Append `other`; records are kept only if both sides kept them.
    pub fn extend(&mut self, other: StepTrace) {
        self.summary.absorb(&other.summary);
        match (&mut self.records, other.records) {
            (Some(mine), Some(theirs)) => mine.extend(theirs),
            (mine, _) => *mine = None,
        }
    }

    /// CSV with header
    /// `tile_row,tile_col,k_index,executed_substeps,baseline_substeps,skipped_by_warp_bit`.
    /// Writes only the header when records were not kept.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(
            w,
            "tile_row,tile_col,k_index,executed_substeps,baseline_substeps,skipped_by_warp_bit"
        )?;
        for r in self.records().unwrap_or(&[]) {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.tile_row,
                r.tile_col,
                r.k_index,
                r.executed_substeps,
                r.baseline_substeps,
                u8::from(r.skipped_by_warp_bit)
            )?;
        }
        Ok(())
    }
}
