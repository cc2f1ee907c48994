//! Seeded random streams shared by every stochastic routine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for `(seed, stream)`. Distinct streams of one seed
/// are independent, so stages of a pipeline can draw without coupling.
pub fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a list of words into a seed; order-sensitive and platform-stable.
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    words.iter().fold(mix64(base), |acc, &w| mix64(acc ^ mix64(w)))
}

// Stream identifiers used across modules.
pub(crate) const STREAM_FEATURES: u64 = 1;
pub(crate) const STREAM_NOISE: u64 = 2;
pub(crate) const STREAM_AUGMENT: u64 = 3;
pub(crate) const STREAM_PRUNE_INIT: u64 = 4;
pub(crate) const STREAM_REINIT: u64 = 5;
pub(crate) const STREAM_BIAS: u64 = 6;
pub(crate) const STREAM_FRAME: u64 = 7;
pub(crate) const STREAM_MC: u64 = 8;
pub(crate) const STREAM_PACKING: u64 = 9;
pub(crate) const STREAM_NET_INIT: u64 = 10;
