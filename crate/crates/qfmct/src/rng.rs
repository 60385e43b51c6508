//! Deterministic random-number streams for parallel replicate generation.
//!
//! Every replicate gets its own ChaCha stream derived purely from a master
//! seed and the replicate index, so a batch of replicates produces the
//! same numbers no matter how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives an independent child seed from `seed` and a caller-chosen tag
/// (SplitMix64 finalizer over the combined value).
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for one replicate: master seed selects the key, the replicate
/// index selects the ChaCha stream.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}
