//! Shared fixtures for the criterion benchmarks in `benches/`.

use drpolicy_core::{rng, Matrix};

/// Random feature matrix and scores of the given shape.
pub fn random_instance(n: usize, p: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut r = rng::stream(seed);
    let flat: Vec<f64> = (0..n * p).map(|_| rng::normal(&mut r)).collect();
    let gamma: Vec<f64> = (0..n).map(|_| rng::normal(&mut r)).collect();
    (Matrix::from_flat(flat, n, p).unwrap(), gamma)
}
