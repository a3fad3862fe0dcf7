//! Seeded input generators shared by the benchmarks.

use climarisk_core::{Label, LabeledDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Points drawn uniformly from `[-1, 1)^d`.
pub fn points(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Two noisy classes split by the first coordinate.
pub fn labeled(n: usize, d: usize, seed: u64) -> LabeledDataset {
    let features = points(n, d, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let labels = features
        .iter()
        .map(|x| Label::from_sign(x[0] + 0.2 * rng.random_range(-1.0..1.0)))
        .collect();
    LabeledDataset::new(features, labels).expect("rectangular features")
}

/// Reciprocal comparison matrix with random Saaty-scale judgments.
pub fn comparison_matrix(m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = vec![vec![1.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let v = rng.random_range(1..=9) as f64;
            let v = if rng.random::<bool>() { v } else { 1.0 / v };
            a[i][j] = v;
            a[j][i] = 1.0 / v;
        }
    }
    a
}

/// Positive regressors and a log-linear target with a little noise.
pub fn log_linear(n: usize, p: usize, seed: u64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| rng.random_range(1.0..40.0)).collect())
        .collect();
    let y = k
        .iter()
        .map(|r| {
            let lin: f64 = r.iter().enumerate().map(|(j, x)| (0.3 - 0.1 * j as f64) * x.ln()).sum();
            (1.0 + lin + rng.random_range(-0.01..0.01)).exp()
        })
        .collect();
    (y, k)
}
