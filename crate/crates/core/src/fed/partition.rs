use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

/// The share of the training set assigned to one worker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    /// 1-based worker number.
    pub worker: usize,
    /// Dataset row indices, ascending.
    pub indices: Vec<usize>,
    pub local_batch: usize,
}

/// Splits `0..n` over `workers` by a seeded shuffle followed by a
/// round-robin deal. Each partition keeps its indices in ascending order so
/// that a single worker sees the rows in their original order, which makes
/// one worker reproduce centralized training exactly.
pub fn partition(n: usize, workers: usize, batch: usize, seed: u64) -> Result<Vec<Partition>> {
    if workers == 0 {
        return Err(Error::Partition("need at least one worker".into()));
    }
    if workers > n {
        return Err(Error::Partition(format!(
            "{workers} workers for {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let mut parts: Vec<Partition> = (1..=workers)
        .map(|worker| Partition {
            worker,
            indices: Vec::with_capacity(n / workers + 1),
            local_batch: (batch / workers).max(1),
        })
        .collect();
    for (i, idx) in order.into_iter().enumerate() {
        parts[i % workers].indices.push(idx);
    }
    for p in &mut parts {
        p.indices.sort_unstable();
    }
    Ok(parts)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sizes(p: &[Partition]) -> Vec<usize> {
        p.iter().map(|p| p.indices.len()).collect()
    }

    #[test]
    fn examples() {
        assert_eq!(sizes(&partition(10, 2, 128, 0).unwrap()), vec![5, 5]);
        assert_eq!(sizes(&partition(10, 3, 128, 0).unwrap()), vec![4, 3, 3]);
        let one = partition(10, 1, 128, 0).unwrap();
        assert_eq!(one[0].indices, (0..10).collect::<Vec<_>>());
        assert_eq!(one[0].local_batch, 128);
        assert_eq!(partition(10, 4, 128, 0).unwrap()[0].local_batch, 32);
        assert!(matches!(partition(3, 4, 1, 0), Err(Error::Partition(_))));
        assert!(matches!(partition(3, 0, 1, 0), Err(Error::Partition(_))));
    }

    #[test]
    fn seeded() {
        assert_eq!(
            partition(50, 3, 8, 4).unwrap(),
            partition(50, 3, 8, 4).unwrap()
        );
        assert_ne!(
            partition(50, 3, 8, 4).unwrap(),
            partition(50, 3, 8, 5).unwrap()
        );
    }

    proptest! {
        #[test]
        fn disjoint_cover_balanced(n in 1usize..300, m in 1usize..17, seed in any::<u64>()) {
            prop_assume!(m <= n);
            let parts = partition(n, m, 128, seed).unwrap();
            let mut all: Vec<usize> = parts.iter().flat_map(|p| p.indices.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let s = sizes(&parts);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }
    }
}
