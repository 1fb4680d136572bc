//! Row-aligned 2-D bit arrays.
//!
//! Column `k` of a row lives in word `k / 64`, bit `k % 64`, so dropping the
//! leftmost column of a row is a right shift by one bit of the packed words.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitGrid {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl BitGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        let words_per_row = words_for(cols);
        Self {
            rows,
            cols,
            words_per_row,
            words: vec![0; rows * words_per_row],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.rows && col < self.cols);
        let w = self.words[row * self.words_per_row + col / 64];
        (w >> (col % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        debug_assert!(row < self.rows && col < self.cols);
        let w = &mut self.words[row * self.words_per_row + col / 64];
        let mask = 1u64 << (col % 64);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn row_words(&self, row: usize) -> &[u64] {
        let start = row * self.words_per_row;
        &self.words[start..start + self.words_per_row]
    }

    pub fn row_count_ones(&self, row: usize) -> usize {
        self.row_words(row).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Set positions in row-major order.
    pub fn iter_ones(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows).flat_map(move |r| iter_word_ones(self.row_words(r)).map(move |c| (r, c)))
    }

    /// Bits of column `col` gathered into a lane word, bit `r` = row `r`.
    /// Only valid for grids with at most 32 rows.
    pub fn column_lane(&self, col: usize) -> u32 {
        debug_assert!(self.rows <= 32);
        let mut lane = 0u32;
        for r in 0..self.rows {
            if self.get(r, col) {
                lane |= 1 << r;
            }
        }
        lane
    }

    /// Bits of row `row` as a lane word. Only valid for grids with at most 32 columns.
    pub fn row_lane(&self, row: usize) -> u32 {
        debug_assert!(self.cols <= 32);
        self.row_words(row).first().copied().unwrap_or(0) as u32
    }

    /// Pack row-major, LSB-first, into `ceil(rows * cols / 8)` bytes.
    pub fn to_packed_bytes(&self) -> Vec<u8> {
        let total = self.rows * self.cols;
        let mut out = vec![0u8; total.div_ceil(8)];
        for (r, c) in self.iter_ones() {
            let i = r * self.cols + c;
            out[i / 8] |= 1 << (i % 8);
        }
        out
    }

    pub fn from_packed_bytes(rows: usize, cols: usize, bytes: &[u8]) -> Option<Self> {
        let total = rows * cols;
        if bytes.len() != total.div_ceil(8) {
            return None;
        }
        let mut grid = Self::new(rows, cols);
        for i in 0..total {
            if (bytes[i / 8] >> (i % 8)) & 1 == 1 {
                grid.set(i / cols, i % cols, true);
            }
        }
        Some(grid)
    }
}

/// Indices of set bits across a word slice, ascending.
pub fn iter_word_ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(wi, &w)| {
        let mut rest = w;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let tz = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(wi * 64 + tz)
        })
    })
}

/// Number of set bits strictly below position `pos`.
pub fn count_ones_below(words: &[u64], pos: usize) -> usize {
    let full = pos / 64;
    let mut n: usize = words[..full.min(words.len())]
        .iter()
        .map(|w| w.count_ones() as usize)
        .sum();
    if full < words.len() && !pos.is_multiple_of(64) {
        n += (words[full] & ((1u64 << (pos % 64)) - 1)).count_ones() as usize;
    }
    n
}

/// Shift a packed row toward column 0 by one position, returning the bit shifted out.
pub fn shift_out_one(words: &mut [u64]) -> bool {
    let Some(first) = words.first() else {
        return false;
    };
    let out = first & 1 == 1;
    for i in 0..words.len() {
        let carry = words.get(i + 1).map_or(0, |w| w & 1);
        words[i] = (words[i] >> 1) | (carry << 63);
    }
    out
}

/// Set bits of a lane word, ascending.
pub fn lane_ones(bits: u32) -> impl Iterator<Item = usize> {
    let mut rest = bits;
    std::iter::from_fn(move || {
        if rest == 0 {
            return None;
        }
        let tz = rest.trailing_zeros() as usize;
        rest &= rest - 1;
        Some(tz)
    })
}
