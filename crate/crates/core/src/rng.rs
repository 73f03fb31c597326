//! Counter-based seed derivation.
//!
//! Every random draw is keyed by `(seed, stream)`, so paths and steps can be
//! generated in any order or in parallel and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for one `(seed, stream)` pair.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
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

/// Seeds for `n` Monte Carlo paths derived from a base seed.
pub fn path_seeds(base: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| mix64(base ^ mix64(i))).collect()
}
