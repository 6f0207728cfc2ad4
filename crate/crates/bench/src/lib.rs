//! Seeded inputs shared by the benchmarks.

use e2icm_core::imaging::Frame;
use e2icm_core::model::Tensor;
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform values in `[-1, 1)`.
pub fn tensor(shape: (usize, usize, usize, usize), seed: u64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_shape_simple_fn(shape, || r.random_range(-1.0..1.0))
}

pub fn frame(channels: usize, side: usize, seed: u64) -> Frame {
    let mut r = rng(seed);
    Array3::from_shape_simple_fn((channels, side, side), || r.random_range(-1.0..1.0))
}

/// `n` feature rows of width `d`.
pub fn features(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((n, d), || r.random_range(-1.0..1.0))
}
