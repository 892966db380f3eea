//! Seed derivation. Every random decision in the pipeline draws from a
//! ChaCha stream keyed by `(seed, purpose, index)`, so results never depend on
//! evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed for a named purpose.
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    purpose
        .bytes()
        .fold(mix(seed), |acc, b| mix(acc ^ u64::from(b)))
}

/// RNG for the `index`-th unit of work (iteration, epoch, ...) of `purpose`.
pub fn stream_rng(seed: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, purpose));
    rng.set_stream(index);
    rng
}
