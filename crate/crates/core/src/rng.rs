//! Seeded randomness.
//!
//! Every random draw in the crate comes from ChaCha8 (`rand_chacha`), whose
//! output stream is fixed by its algorithm and identical on every platform.
//! Sub-streams are derived from a user seed plus a label with 64-bit FNV-1a,
//! so independent consumers never share a stream and results do not depend
//! on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StableRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Mix a base seed with a textual label (image id, detector name, ...).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    fnv1a(fnv1a(FNV_OFFSET, &seed.to_le_bytes()), label.as_bytes())
}

/// Mix a base seed with a numeric label (tile id, crop index, ...).
pub fn derive_seed_u64(seed: u64, label: u64) -> u64 {
    fnv1a(fnv1a(FNV_OFFSET, &seed.to_le_bytes()), &label.to_le_bytes())
}

pub fn rng_from_seed(seed: u64) -> StableRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(7, "scene-a"), derive_seed(7, "scene-a"));
        assert_ne!(derive_seed(7, "scene-a"), derive_seed(7, "scene-b"));
        assert_ne!(derive_seed(7, "scene-a"), derive_seed(8, "scene-a"));
        assert_ne!(derive_seed_u64(1, 2), derive_seed_u64(2, 1));
    }

    #[test]
    fn stream_is_reproducible() {
        let a: Vec<u64> = (0..8).map({
            let mut r = rng_from_seed(42);
            move |_| r.random()
        }).collect();
        let mut r = rng_from_seed(42);
        let b: Vec<u64> = (0..8).map(|_| r.random()).collect();
        assert_eq!(a, b);
    }
}
