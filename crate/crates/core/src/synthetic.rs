//! Seeded random test systems.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linop::{DenseMatrix, PartitionedSystem};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian entries scaled by `1/sqrt(ncols)`, so the spectral norm stays
/// O(1) regardless of size.
pub fn random_dense(nrows: usize, ncols: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let s = 1.0 / (ncols.max(1) as f64).sqrt();
    let data = (0..nrows * ncols)
        .map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
        .collect();
    DenseMatrix::new(nrows, ncols, data).expect("sizes agree")
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut r))
        .collect()
}

/// Independent random `A` (m×n), `B` (n×m), `b`, `c`; `f = b`, `g = c`.
pub fn random_system(m: usize, n: usize, lambda: f64, mu: f64, seed: u64) -> PartitionedSystem {
    let s = seed.wrapping_mul(4);
    PartitionedSystem::from_dense(
        lambda,
        mu,
        random_dense(m, n, s),
        random_dense(n, m, s + 1),
        random_vector(m, s + 2),
        random_vector(n, s + 3),
    )
    .expect("random right-hand sides are nonzero")
}

/// `B = Aᵀ` with `λ = 1`, `μ = −1`: a symmetric quasi-definite system.
pub fn random_sqd_system(m: usize, n: usize, seed: u64) -> PartitionedSystem {
    let s = seed.wrapping_mul(4);
    let a = random_dense(m, n, s);
    let at = a.transpose();
    PartitionedSystem::from_dense(
        1.0,
        -1.0,
        a,
        at,
        random_vector(m, s + 2),
        random_vector(n, s + 3),
    )
    .expect("random right-hand sides are nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::Operator;

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(random_vector(5, 3), random_vector(5, 3));
        assert_ne!(random_vector(5, 3), random_vector(5, 4));
        let a = random_dense(3, 4, 9);
        assert_eq!((a.nrows(), a.ncols()), (3, 4));
    }
}
