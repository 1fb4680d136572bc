//! Bitmap sparse formats: single-level row-offset encoding, two-level tiled
//! encoding, lane condensing, and the `DSTC` / `DMAT` fixture file formats.

mod condense;
mod file;
mod single;
mod two_level;

pub use condense::{condense, CondensedLane, CondensedTile, QuantumLevels, Side, A_STEP, B_STEP, MAX_LANE};
pub use file::{read_dmat, read_dstc, write_dmat, write_dstc, DMAT_MAGIC, DSTC_MAGIC, DSTC_VERSION};
pub use single::BitmapMatrix;
pub use two_level::{EncodeOptions, EncodedTile, TwoLevelBitmapMatrix, ValueOrder};
