//! Seed derivation.
//!
//! Every random decision in a run is drawn from a ChaCha stream keyed by the
//! run seed plus a purpose tag, so that changing one consumer never shifts the
//! draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub const STREAM_SOURCES: u64 = 1;
pub const STREAM_PAYLOADS: u64 = 2;
pub const STREAM_UPDATE: u64 = 3;
pub const STREAM_DECODE: u64 = 4;
/// Node `u` draws from stream `STREAM_NODE_BASE + u`.
pub const STREAM_NODE_BASE: u64 = 1 << 32;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn node_stream(seed: u64, node: usize) -> SimRng {
    stream(seed, STREAM_NODE_BASE + node as u64)
}

/// Sub-seed for a trial or repetition derived from a base seed.
pub fn derive(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5eed)))
}
