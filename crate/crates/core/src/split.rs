//! Seeded data splits and batching helpers.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG used throughout the crate.
pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seeded permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng(seed));
    idx
}

/// Splits `0..n` into consecutive fractions of a seeded permutation. The last
/// part takes the remainder.
pub fn split_indices(n: usize, fractions: &[f64], seed: u64) -> Vec<Vec<usize>> {
    let perm = permutation(n, seed);
    let mut parts = Vec::with_capacity(fractions.len());
    let mut start = 0;
    for (i, f) in fractions.iter().enumerate() {
        let end = if i + 1 == fractions.len() {
            n
        } else {
            (start + libm::round(f * n as f64) as usize).min(n)
        };
        parts.push(perm[start..end].to_vec());
        start = end;
    }
    parts
}

/// 90/10 train/validation split used for gate training.
pub fn train_validation(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut parts = split_indices(n, &[0.9, 0.1], seed);
    let val = parts.pop().unwrap_or_default();
    let train = parts.pop().unwrap_or_default();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_a_partition() {
        let parts = split_indices(101, &[0.8, 0.1, 0.1], 4);
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
        assert_eq!(parts[0].len(), 81);
        assert_eq!(parts[1].len(), 10);
    }

    #[test]
    fn train_validation_ratio() {
        let (t, v) = train_validation(500, 1);
        assert_eq!((t.len(), v.len()), (450, 50));
        assert_eq!(train_validation(500, 1), (t, v));
    }
}
