//! Deterministic seed derivation.
//!
//! Every stochastic operation in the crate draws from a ChaCha stream whose
//! seed is derived from a master seed plus context tags (coalition mask,
//! instance index, grid-point hash). Results are therefore identical across
//! runs and across thread schedules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a master seed with context tags into a derived seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut state = mix64(master ^ 0x6C62_272E_07BB_0142);
    for &tag in tags {
        state = mix64(state.wrapping_add(mix64(tag)));
    }
    state
}

/// RNG for one coalition of one explained instance.
///
/// The stream depends only on `(instance_seed, feature mask)`, so parallel
/// and serial coalition evaluation produce identical draws, and a permuted
/// group order maps to the same streams.
pub fn coalition_rng(instance_seed: u64, mask: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(instance_seed, &[mask]))
}

/// Seeded RNG from a plain u64.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// FNV-1a over raw bytes; used to fold matrix content into seeds.
pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}

/// Content hash of an f64 slice (bit patterns, order-sensitive).
pub fn hash_f64s<'a>(values: impl IntoIterator<Item = &'a f64>) -> u64 {
    fnv1a64(
        values
            .into_iter()
            .flat_map(|v| v.to_bits().to_le_bytes()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_seed_is_deterministic_and_tag_sensitive() {
        assert_eq!(derive_seed(7, &[1, 2]), derive_seed(7, &[1, 2]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[1]), derive_seed(8, &[1]));
    }

    #[test]
    fn coalition_rng_streams_are_reproducible() {
        let a: f64 = coalition_rng(42, 5).random();
        let b: f64 = coalition_rng(42, 5).random();
        let c: f64 = coalition_rng(42, 6).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn f64_hash_distinguishes_content() {
        assert_eq!(hash_f64s(&[1.0, 2.0]), hash_f64s(&[1.0, 2.0]));
        assert_ne!(hash_f64s(&[1.0, 2.0]), hash_f64s(&[2.0, 1.0]));
    }
}
