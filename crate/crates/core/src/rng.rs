//! Seeded random streams.
//!
//! Every stochastic operation takes a [`Stream`]. Independent streams are
//! derived from one master seed either by index ([`indexed`]) or by a stage
//! name ([`named_seed`]), so the result of a task never depends on which
//! thread ran it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// A stream seeded directly from `seed` (stream id 0).
pub fn stream(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `index` of the family keyed by `seed`.
///
/// Uses ChaCha's native stream id, so streams of one family never overlap.
pub fn indexed(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed for the stage `name` from `master`.
///
/// FNV-1a over the name, folded into the master seed through SplitMix64.
/// Stable across platforms and releases.
pub fn named_seed(master: u64, name: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in name.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(hash))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn indexed_streams_are_reproducible_and_distinct() {
        let a: u64 = indexed(7, 3).random();
        let b: u64 = indexed(7, 3).random();
        let c: u64 = indexed(7, 4).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn named_seeds_differ_by_name_and_master() {
        assert_eq!(named_seed(1, "train_rbm"), named_seed(1, "train_rbm"));
        assert_ne!(named_seed(1, "train_rbm"), named_seed(1, "train_classifier"));
        assert_ne!(named_seed(1, "train_rbm"), named_seed(2, "train_rbm"));
    }

    #[test]
    fn named_seed_is_frozen() {
        // Changing the derivation would silently change every recorded run.
        assert_eq!(named_seed(0, ""), 0x21fa_69a5_8f3d_62f5);
        assert_eq!(named_seed(42, "train_rbm"), 0x1bb3_e65a_ee08_e4a9);
        assert_eq!(named_seed(42, "generation/single/3/7"), 0x3459_939f_4a91_047b);
    }
}
