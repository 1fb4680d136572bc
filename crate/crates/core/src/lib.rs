//! Dual-side sparse matrix multiplication and convolution on bitmap
//! encodings, plus a cycle cost model of an outer-product tensor core.

pub mod bits;
pub mod codec;
pub mod cost;
pub mod error;
pub mod gen;
pub mod im2col;
pub mod matrix;
pub mod reference;
pub mod spconv;
pub mod spgemm;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
