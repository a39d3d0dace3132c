//! Portable seeded randomness.
//!
//! All sampling goes through ChaCha8 (`rand_chacha::ChaCha8Rng`, seeded with
//! `seed_from_u64`) and the integer helpers below, which avoid any
//! platform- or version-dependent distribution code. Given the same seed
//! the same draws come out everywhere.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 64-bit FNV-1a, used to derive per-stream seeds from names.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for a named sub-stream of `seed`.
pub fn derive_seed(seed: u64, name: &str) -> u64 {
    seed.wrapping_add(fnv1a(name.as_bytes()))
}

/// Uniform integer in `0..n` by rejection sampling. `n` must be nonzero.
pub fn below(rng: &mut Rng, n: u64) -> u64 {
    assert!(n > 0, "below(0)");
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % n;
        }
    }
}

/// Sorted indices of a uniform `k`-subset of `0..n` (partial Fisher-Yates).
pub fn sample_indices(rng: &mut Rng, n: usize, k: usize) -> Vec<usize> {
    let k = k.min(n);
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + below(rng, (n - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut picked = pool[..k].to_vec();
    picked.sort_unstable();
    picked
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn sampling_is_reproducible_and_sorted() {
        let a = sample_indices(&mut seeded(42), 200, 50);
        let b = sample_indices(&mut seeded(42), 200, 50);
        assert_eq!(a, b);
        assert_eq!(a.len(), 50);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert!(a.iter().all(|&i| i < 200));
        assert_ne!(a, sample_indices(&mut seeded(43), 200, 50));
    }

    #[test]
    fn small_population_is_taken_whole() {
        assert_eq!(sample_indices(&mut seeded(1), 5, 50), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn below_stays_in_range() {
        let mut r = seeded(7);
        for n in 1..50u64 {
            assert!(below(&mut r, n) < n);
        }
    }
}
