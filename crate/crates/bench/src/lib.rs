//! Shared fixtures for the pipeline benchmarks.

use primcloud_core::metrics::FeatureMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Standard-Gaussian feature matrix with optional per-coordinate shift.
pub fn gaussian_features(rows: usize, cols: usize, seed: u64, shift: f64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|_| {
            let x: f64 = StandardNormal.sample(&mut rng);
            x + shift
        })
        .collect();
    FeatureMatrix::new(rows, cols, data, (0..rows as u64).collect()).expect("gaussian matrix")
}
