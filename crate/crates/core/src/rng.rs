//! Counter-derived random streams.
//!
//! Every random quantity is drawn from a ChaCha12 generator seeded with
//! `seed_from_u64(seed)` and positioned on stream `j`, where `j` is the column
//! (or trial) ordinal. Nested ordinals (block, then column) are folded into the
//! seed with SplitMix64, so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for sub-task `ordinal` of a run seeded with `seed`.
pub fn derive_seed(seed: u64, ordinal: u64) -> u64 {
    splitmix64(seed ^ splitmix64(ordinal.wrapping_add(1)))
}

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
