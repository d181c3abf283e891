//! Seeded random matrices.
//!
//! Every draw uses `ChaCha8Rng::seed_from_u64(seed)` from `rand_chacha` and
//! `gen_range(min..=max)` over the full declared range, filling matrices in
//! row-major order. Consecutive matrices from one [`MatrixSource`] continue
//! the same ChaCha stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fxp::{max_value, min_value, Matrix};

#[derive(Debug, Clone)]
pub struct MatrixSource {
    rng: ChaCha8Rng,
}

impl MatrixSource {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform over the full `width`-bit range. Panics if `width` is not a valid bitwidth.
    pub fn matrix(&mut self, rows: usize, cols: usize, width: u32, signed: bool) -> Matrix {
        let (lo, hi) = (min_value(width, signed), max_value(width, signed));
        let rng = &mut self.rng;
        Matrix::from_fn(rows, cols, width, signed, |_, _| rng.gen_range(lo..=hi)).expect("valid bitwidth")
    }
}

/// One matrix from a fresh stream seeded with `seed`.
pub fn random_matrix(rows: usize, cols: usize, width: u32, signed: bool, seed: u64) -> Matrix {
    MatrixSource::new(seed).matrix(rows, cols, width, signed)
}
