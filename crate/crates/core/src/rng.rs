//! Deterministic random streams.
//!
//! Every random quantity is drawn from a stream keyed by the master seed and
//! a small tuple of indices (draw, trio, purpose). Streams never depend on
//! which thread consumes them, so results are identical for any degree of
//! parallelism.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Stream = Xoshiro256PlusPlus;

/// Stream purposes, used as the first key component so that e.g. the map
/// and family 0 never share a stream.
pub mod purpose {
    pub const MAP: u64 = 1;
    pub const FAMILY: u64 = 2;
    pub const DRAW: u64 = 3;
    pub const REPLICATE: u64 = 4;
    pub const REPLICATE_TEST: u64 = 5;
    /// Per-instrument test seeds when instruments are tested separately.
    pub const INSTRUMENT: u64 = 6;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a key into a new 64-bit seed.
pub fn derive_seed(seed: u64, key: &[u64]) -> u64 {
    key.iter()
        .fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)))
}

pub fn stream(seed: u64, key: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(seed, key))
}
