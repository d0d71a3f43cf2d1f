use rand::Rng;

/// Writes a uniformly random `b`-subset of `0..n` into `out`, sorted ascending.
///
/// For `b == n` the full set is returned and `rng` is left untouched.
///
/// # Panics
/// If `b == 0` or `b > n`.
pub fn sample_index_set<R: Rng + ?Sized>(n: usize, b: usize, rng: &mut R, out: &mut Vec<usize>) {
    assert!(b >= 1 && b <= n, "batch size {b} outside 1..={n}");
    out.clear();
    if b == n {
        out.extend(0..n);
        return;
    }
    out.extend(rand::seq::index::sample(rng, n, b).iter());
    out.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::chain_rng;
    use itertools::Itertools;
    use rand::RngCore;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    use std::collections::HashMap;

    #[test]
    fn full_batch_leaves_rng_alone() {
        let mut a = chain_rng(9, 0);
        let mut b = chain_rng(9, 0);
        let mut out = Vec::new();
        sample_index_set(5, 5, &mut a, &mut out);
        assert_eq!(out, vec![0, 1, 2, 3, 4]);
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn subsets_are_uniform() {
        let mut rng = chain_rng(2024, 0);
        let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
        let mut out = Vec::new();
        let draws = 60_000u64;
        for _ in 0..draws {
            sample_index_set(4, 2, &mut rng, &mut out);
            *counts.entry(out.clone()).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = draws as f64 / 6.0;
        let stat: f64 = (0..4)
            .combinations(2)
            .map(|s| {
                let c = counts[&s] as f64;
                (c - expected).powi(2) / expected
            })
            .sum();
        let p = 1.0 - ChiSquared::new(5.0).unwrap().cdf(stat);
        assert!(p > 0.001, "chi-square {stat}, p = {p}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = chain_rng(77, 3);
        let mut b = chain_rng(77, 3);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for _ in 0..100 {
            sample_index_set(10, 3, &mut a, &mut x);
            sample_index_set(10, 3, &mut b, &mut y);
            assert_eq!(x, y);
            assert!(x.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    #[should_panic]
    fn oversized_batch_panics() {
        sample_index_set(3, 4, &mut chain_rng(0, 0), &mut Vec::new());
    }
}
