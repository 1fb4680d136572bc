use std::io::{Read, Write};

use super::two_level::{EncodedTile, TwoLevelBitmapMatrix, ValueOrder};
use crate::bits::BitGrid;
use crate::error::{Error, Result};

pub const DSTC_MAGIC: &[u8; 4] = b"DSTC";
pub const DSTC_VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn dim(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in u32")))
}

/// Write the `DSTC` layout: a little-endian header
/// `{magic, version, rows, cols, tile_rows, tile_cols}`, the warp bitmap packed
/// LSB-first, then for every set warp bit the element bitmap (row-major,
/// LSB-first) followed by the tile's values as little-endian `f32`.
///
/// Tile values are always written in row-major position order, whatever the
/// in-memory packing order.
pub fn write_dstc(m: &TwoLevelBitmapMatrix, w: &mut impl Write) -> Result<()> {
    m.validate()?;
    w.write_all(DSTC_MAGIC)?;
    put_u32(w, DSTC_VERSION)?;
    put_u32(w, dim(m.rows(), "rows")?)?;
    put_u32(w, dim(m.cols(), "cols")?)?;
    put_u32(w, dim(m.tile_rows(), "tile_rows")?)?;
    put_u32(w, dim(m.tile_cols(), "tile_cols")?)?;
    w.write_all(&m.warp_bitmap().to_packed_bytes())?;
    let canonical = m.with_order(ValueOrder::RowMajor);
    for tile in canonical.tiles() {
        w.write_all(&tile.bitmap().to_packed_bytes())?;
        for v in tile.values() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Read a `DSTC` file. The result is packed in `order`.
pub fn read_dstc(r: &mut impl Read, order: ValueOrder) -> Result<TwoLevelBitmapMatrix> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DSTC_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = get_u32(r)?;
    if version != DSTC_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = get_u32(r)? as usize;
    let cols = get_u32(r)? as usize;
    let tile_rows = get_u32(r)? as usize;
    let tile_cols = get_u32(r)? as usize;
    if rows == 0 || cols == 0 || tile_rows == 0 || tile_cols == 0 {
        return Err(Error::Format("zero dimension in header".into()));
    }
    let (grid_rows, grid_cols) = (rows.div_ceil(tile_rows), cols.div_ceil(tile_cols));
    let mut buf = vec![0u8; (grid_rows * grid_cols).div_ceil(8)];
    r.read_exact(&mut buf)?;
    let warp = BitGrid::from_packed_bytes(grid_rows, grid_cols, &buf)
        .ok_or_else(|| Error::Format("warp bitmap length".into()))?;
    let mut tiles = Vec::with_capacity(warp.count_ones());
    for _ in 0..warp.count_ones() {
        let mut buf = vec![0u8; (tile_rows * tile_cols).div_ceil(8)];
        r.read_exact(&mut buf)?;
        let bitmap = BitGrid::from_packed_bytes(tile_rows, tile_cols, &buf)
            .ok_or_else(|| Error::Format("element bitmap length".into()))?;
        let mut values = Vec::with_capacity(bitmap.count_ones());
        let mut b = [0u8; 4];
        for _ in 0..bitmap.count_ones() {
            r.read_exact(&mut b)?;
            values.push(f32::from_le_bytes(b));
        }
        tiles.push(EncodedTile::new(bitmap, values));
    }
    let m = TwoLevelBitmapMatrix::from_parts(
        rows,
        cols,
        tile_rows,
        tile_cols,
        ValueOrder::RowMajor,
        warp,
        tiles,
    )?;
    m.validate()?;
    Ok(m.with_order(order))
}

pub const DMAT_MAGIC: &[u8; 4] = b"DMAT";

/// Write a dense `DMAT` array: header `{magic, rows, cols, channels}` as
/// little-endian u32, then `rows × cols × channels` little-endian `f32`,
/// row-major with the channel fastest.
pub fn write_dmat(w: &mut impl Write, rows: usize, cols: usize, channels: usize, data: &[f32]) -> Result<()> {
    if data.len() != rows * cols * channels {
        return Err(Error::Shape(format!(
            "{rows}x{cols}x{channels} array with {} values",
            data.len()
        )));
    }
    w.write_all(DMAT_MAGIC)?;
    put_u32(w, dim(rows, "rows")?)?;
    put_u32(w, dim(cols, "cols")?)?;
    put_u32(w, dim(channels, "channels")?)?;
    let mut buf = Vec::with_capacity(data.len() * 4);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Read a `DMAT` array as `(rows, cols, channels, data)`.
pub fn read_dmat(r: &mut impl Read) -> Result<(usize, usize, usize, Vec<f32>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DMAT_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let rows = get_u32(r)? as usize;
    let cols = get_u32(r)? as usize;
    let channels = get_u32(r)? as usize;
    let len = rows
        .checked_mul(cols)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| Error::Format("array size overflows".into()))?;
    let mut buf = vec![0u8; len * 4];
    r.read_exact(&mut buf)?;
    let data = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((rows, cols, channels, data))
}
