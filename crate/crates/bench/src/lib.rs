//! Deterministic input generators shared by the workspace benchmarks.

use coact_core::SparseTensor;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Dense third-order tensor with low-rank multilinear structure, the
/// friendliest input shape for the decomposition fits.
pub fn low_rank_tensor(name: &str, shape: [usize; 3], rank: usize, seed: u64) -> SparseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(0.1..1.0)).collect() };
    let a = draw(shape[0] * rank);
    let b = draw(shape[1] * rank);
    let c = draw(shape[2] * rank);
    let mut entries = Vec::with_capacity(shape[0] * shape[1] * shape[2]);
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            for k in 0..shape[2] {
                let value: f64 = (0..rank)
                    .map(|r| a[i * rank + r] * b[j * rank + r] * c[k * rank + r])
                    .sum();
                entries.push((vec![i, j, k], value));
            }
        }
    }
    SparseTensor::new(name, shape.to_vec(), entries)
}

/// Dense binary matrix (as a two-mode tensor) mirroring a prepared
/// behaviour table: `density` controls the fraction of ones.
pub fn binary_matrix(
    name: &str,
    rows: usize,
    cols: usize,
    density: f64,
    seed: u64,
) -> SparseTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let value = if rng.random_range(0.0..1.0) < density {
                1.0
            } else {
                0.0
            };
            entries.push((vec![i, j], value));
        }
    }
    SparseTensor::new(name, vec![rows, cols], entries)
}

/// Pseudo-random class labels in `0..classes`.
pub fn class_labels(len: usize, classes: u8, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(0..classes)).collect()
}

/// Pseudo-random unit-square event coordinates.
pub fn unit_events(len: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)))
        .collect()
}
