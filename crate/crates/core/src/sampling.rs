//! Seeded randomness and the two index-sampling disciplines used by the
//! optimizers: uniform subsets without replacement (epoch anchors) and
//! i.i.d. draws with replacement (inner mini-batches).
//!
//! All randomness flows through [`SeededRng`], a ChaCha stream keyed by a
//! 64-bit seed. Sub-streams derived from `(seed, tag, tag, ...)` are
//! statistically independent and reproducible, which lets concurrent runs
//! (or per-trajectory rollouts) share one experiment seed without sharing
//! generator state.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic generator with cheap derived sub-streams.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed this generator was created from (sub-stream tags included).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derives an independent stream from `(self.seed, tags...)`.
    ///
    /// The derivation is a splitmix64 chain, so equal `(seed, tags)` always
    /// yield the identical stream and distinct tags decorrelate streams.
    pub fn substream(&self, tags: &[u64]) -> SeededRng {
        let mut s = splitmix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        for &t in tags {
            s = splitmix64(s ^ splitmix64(t.wrapping_add(0xbf58_476d_1ce4_e5b9)));
        }
        SeededRng::new(s)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `k` distinct indices uniformly from `0..n`.
///
/// Partial Fisher-Yates over a sparse swap table: O(k) memory even when
/// `k` is much smaller than `n`.
///
/// Panics when `k == 0` or `k > n`.
pub fn sample_without_replacement(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    assert!(k >= 1, "sample_without_replacement: k must be >= 1");
    assert!(
        k <= n,
        "sample_without_replacement: k = {k} exceeds population n = {n}"
    );
    let mut swaps = std::collections::HashMap::new();
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let j = rng.random_range(i..n);
        let picked = *swaps.get(&j).unwrap_or(&j);
        let here = *swaps.get(&i).unwrap_or(&i);
        out.push(picked);
        swaps.insert(j, here);
    }
    out
}

/// Draws `k` i.i.d. uniform indices from `0..n` (duplicates allowed).
///
/// Panics when `k == 0` or `n == 0`.
pub fn sample_with_replacement(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    assert!(k >= 1, "sample_with_replacement: k must be >= 1");
    assert!(n >= 1, "sample_with_replacement: population must be nonempty");
    (0..k).map(|_| rng.random_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_population_draw_is_a_permutation() {
        let mut rng = SeededRng::new(7);
        let mut got = sample_without_replacement(5, 5, &mut rng);
        got.sort_unstable();
        assert_eq!(got, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn without_replacement_has_no_duplicates() {
        let mut rng = SeededRng::new(11);
        for _ in 0..200 {
            let draw = sample_without_replacement(50, 17, &mut rng);
            let mut sorted = draw.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), draw.len());
        }
    }

    #[test]
    fn single_element_population_repeats() {
        let mut rng = SeededRng::new(3);
        assert_eq!(sample_with_replacement(1, 4, &mut rng), vec![0, 0, 0, 0]);
    }

    #[test]
    fn with_replacement_stays_in_range() {
        let mut rng = SeededRng::new(5);
        for _ in 0..100 {
            for &i in &sample_with_replacement(10, 3, &mut rng) {
                assert!(i < 10);
            }
        }
    }

    #[test]
    fn equal_seeds_equal_streams() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..64 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let mut sa = SeededRng::new(42).substream(&[1, 2]);
        let mut sb = SeededRng::new(42).substream(&[1, 2]);
        assert_eq!(sa.next_u64(), sb.next_u64());
        let mut sc = SeededRng::new(42).substream(&[1, 3]);
        assert_ne!(sa.next_u64(), sc.next_u64());
    }

    #[test]
    fn singleton_frequencies_are_uniform() {
        // (n=5, k=1): each index should land near 0.2 over 1e5 draws.
        let mut rng = SeededRng::new(202);
        let mut counts = [0u64; 5];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_without_replacement(5, 1, &mut rng)[0]] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.2).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    fn pairs_from_three_are_equiprobable() {
        // All 3 two-subsets of {0,1,2} within 3 sigma of the binomial CI.
        let mut rng = SeededRng::new(404);
        let mut counts = [0u64; 3];
        let draws = 100_000;
        for _ in 0..draws {
            let mut pair = sample_without_replacement(3, 2, &mut rng);
            pair.sort_unstable();
            let key = match (pair[0], pair[1]) {
                (0, 1) => 0,
                (0, 2) => 1,
                (1, 2) => 2,
                other => panic!("unexpected pair {other:?}"),
            };
            counts[key] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - p).abs() < 3.0 * sigma, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn with_replacement_frequencies_are_uniform() {
        let mut rng = SeededRng::new(909);
        let mut counts = [0u64; 2];
        let draws = 100_000;
        for &i in &sample_with_replacement(2, draws, &mut rng) {
            counts[i] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
        }
    }

    #[test]
    #[should_panic(expected = "exceeds population")]
    fn oversized_subset_is_rejected() {
        let mut rng = SeededRng::new(1);
        sample_without_replacement(3, 4, &mut rng);
    }

    #[test]
    #[should_panic(expected = "k must be >= 1")]
    fn empty_with_replacement_is_rejected() {
        let mut rng = SeededRng::new(1);
        sample_with_replacement(3, 0, &mut rng);
    }
}
