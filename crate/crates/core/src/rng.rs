//! Seeded random streams.
//!
//! Every stochastic component draws from ChaCha8, a counter-based stream
//! cipher generator whose output is specified bit-for-bit independent of
//! platform. Independent streams are derived from a master seed plus a
//! small tuple of indices (epoch, sample index, purpose) through SplitMix64
//! mixing, so the stream a sample sees never depends on processing order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

/// Stream purposes. Distinct purposes never share a stream even for equal
/// indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Augment = 1,
    Shuffle = 2,
    Init = 3,
    Dropout = 4,
    Split = 5,
    Toy = 6,
    Preview = 7,
}

/// One round of SplitMix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream for `(master, purpose, major, minor)`. `major` is typically the
/// epoch and `minor` the sample index.
pub fn stream(master: u64, purpose: Purpose, major: u64, minor: u64) -> StreamRng {
    let mut key = splitmix64(master);
    key = splitmix64(key ^ purpose as u64);
    key = splitmix64(key ^ major);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(minor);
    rng
}
