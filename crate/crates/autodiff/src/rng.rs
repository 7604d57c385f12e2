//! Seeded random streams shared by every crate in the workspace.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as StreamRng;
use rand_chacha::ChaCha8Rng;

/// A ChaCha stream keyed by a master seed and a stream index.
///
/// Distinct streams of the same seed are statistically independent, which
/// lets callers hand one stream to each device, trial, or training step
/// without the streams perturbing each other.
pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes two words into a new seed (splitmix64 finalizer).
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
