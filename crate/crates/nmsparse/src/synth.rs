//! Seeded synthetic data for benches, tests and calibration sets.

use crate::tensor::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Box-Muller standard normal draws on a counter-based stream, so the
/// same seed yields the same matrix on every platform.
pub fn gaussian_matrix(rows: usize, cols: usize, mean: f64, std: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = rows * cols;
    let mut data = Vec::with_capacity(total);
    while data.len() < total {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        data.push(mean + std * r * theta.cos());
        if data.len() < total {
            data.push(mean + std * r * theta.sin());
        }
    }
    Matrix::new(rows, cols, data).expect("finite gaussian draws")
}

/// Uniform draws in [lo, hi), same determinism guarantees.
pub fn uniform_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
    Matrix::new(rows, cols, data).expect("finite uniform draws")
}
