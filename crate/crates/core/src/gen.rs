//! Seeded input generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::im2col::{FeatureMap, Filters};
use crate::matrix::DenseMatrix;

/// Algorithm identifier recorded alongside generated data.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn check_density(density: f64) -> Result<()> {
    if (0.0..=1.0).contains(&density) {
        Ok(())
    } else {
        Err(Error::Density(density))
    }
}

/// Uniform in `[-1, 1]`, never exactly zero.
pub fn nonzero_value(rng: &mut impl Rng) -> f32 {
    loop {
        let v = rng.random_range(-1.0f32..=1.0);
        if v != 0.0 {
            return v;
        }
    }
}

fn sparse_values(len: usize, density: f64, rng: &mut impl Rng) -> Result<Vec<f32>> {
    check_density(density)?;
    Ok((0..len)
        .map(|_| {
            if rng.random::<f64>() < density {
                nonzero_value(rng)
            } else {
                0.0
            }
        })
        .collect())
}

/// Each element independently nonzero with probability `density`.
pub fn sparse_matrix(rows: usize, cols: usize, density: f64, rng: &mut impl Rng) -> Result<DenseMatrix> {
    DenseMatrix::new(rows, cols, sparse_values(rows * cols, density, rng)?)
}

pub fn feature_map(h: usize, w: usize, c: usize, density: f64, rng: &mut impl Rng) -> Result<FeatureMap> {
    FeatureMap::new(h, w, c, sparse_values(h * w * c, density, rng)?)
}

pub fn filters(n: usize, kh: usize, kw: usize, c: usize, density: f64, rng: &mut impl Rng) -> Result<Filters> {
    Filters::new(n, kh, kw, c, sparse_values(n * kh * kw * c, density, rng)?)
}

/// A matrix whose nonzeros all fall inside `tiles` randomly chosen
/// `tile × tile` blocks, each block filled at `density`.
pub fn clustered_matrix(
    rows: usize,
    cols: usize,
    tile: usize,
    tiles: usize,
    density: f64,
    rng: &mut impl Rng,
) -> Result<DenseMatrix> {
    check_density(density)?;
    if tile == 0 {
        return Err(Error::Config("tile size must be at least 1".into()));
    }
    let (gr, gc) = (rows.div_ceil(tile), cols.div_ceil(tile));
    if tiles > gr * gc {
        return Err(Error::Config(format!("{tiles} tiles requested from a {gr}x{gc} grid")));
    }
    let chosen = rand::seq::index::sample(rng, gr * gc, tiles).into_vec();
    let mut m = DenseMatrix::zeros(rows, cols);
    for t in chosen {
        let (r0, c0) = ((t / gc) * tile, (t % gc) * tile);
        for r in r0..(r0 + tile).min(rows) {
            for c in c0..(c0 + tile).min(cols) {
                if rng.random::<f64>() < density {
                    m.set(r, c, nonzero_value(rng));
                }
            }
        }
    }
    Ok(m)
}
