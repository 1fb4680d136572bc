use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};

use dstc::codec::{read_dstc, write_dstc, TwoLevelBitmapMatrix, ValueOrder, DMAT_MAGIC, DSTC_MAGIC};
use dstc::im2col::FeatureMap;

/// What `verify` found in a fixture.
#[derive(Clone, Debug, PartialEq)]
pub enum FixtureSummary {
    Dstc {
        rows: usize,
        cols: usize,
        tile_rows: usize,
        tile_cols: usize,
        nnz: usize,
        empty_tile_fraction: f64,
    },
    Dmat {
        height: usize,
        width: usize,
        channels: usize,
        nnz: usize,
    },
}

impl std::fmt::Display for FixtureSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FixtureSummary::Dstc { rows, cols, tile_rows, tile_cols, nnz, empty_tile_fraction } => write!(
                f,
                "DSTC {rows}x{cols}, tiles {tile_rows}x{tile_cols}, nnz {nnz}, density {:.6}, empty tiles {:.4}",
                *nnz as f64 / (rows * cols) as f64,
                empty_tile_fraction
            ),
            FixtureSummary::Dmat { height, width, channels, nnz } => write!(
                f,
                "DMAT {height}x{width}x{channels}, nnz {nnz}, density {:.6}",
                *nnz as f64 / (height * width * channels) as f64
            ),
        }
    }
}

/// Check a fixture decodes, re-encodes to the same structure and writes back
/// byte-identical.
pub fn verify(path: &Path) -> Result<FixtureSummary> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ensure!(bytes.len() >= 4, "{}: too short for a header", path.display());
    let magic: &[u8] = &bytes[..4];
    if magic == DSTC_MAGIC {
        let m = read_dstc(&mut bytes.as_slice(), ValueOrder::RowMajor)?;
        let dense = m.decode()?;
        let again = TwoLevelBitmapMatrix::encode(&dense, m.tile_rows(), m.tile_cols(), ValueOrder::RowMajor)?;
        ensure!(again == m, "re-encoding the decoded matrix changes its structure");
        let mut out = Vec::new();
        write_dstc(&m, &mut out)?;
        ensure!(out == bytes, "rewritten file differs from the original");
        Ok(FixtureSummary::Dstc {
            rows: m.rows(),
            cols: m.cols(),
            tile_rows: m.tile_rows(),
            tile_cols: m.tile_cols(),
            nnz: m.nnz(),
            empty_tile_fraction: m.empty_tile_fraction(),
        })
    } else if magic == DMAT_MAGIC {
        let map = FeatureMap::read_dmat(&mut bytes.as_slice())?;
        let enc = map.encode_channels()?;
        for (c, e) in enc.iter().enumerate() {
            ensure!(e.decode() == map.channel(c), "channel {c} does not round-trip");
        }
        let mut out = Vec::new();
        map.write_dmat(&mut out)?;
        ensure!(out == bytes, "rewritten file differs from the original");
        Ok(FixtureSummary::Dmat {
            height: map.height(),
            width: map.width(),
            channels: map.channels(),
            nnz: enc.iter().map(|e| e.values().len()).sum(),
        })
    } else {
        bail!("{}: unknown magic {:?}", path.display(), magic)
    }
}
