//! Deterministic RNG streams.
//!
//! Every random decision derives its generator from the user seed plus a path of stream
//! identifiers, so results do not depend on thread scheduling or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes `seed` with each element of `stream` into a 64-bit seed.
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream
        .iter()
        .fold(splitmix64(seed), |acc, &s| splitmix64(acc ^ splitmix64(s)))
}

pub fn stream_rng(seed: u64, stream: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream))
}
