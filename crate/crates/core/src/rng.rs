//! Deterministic random streams.
//!
//! Every random decision in the arena is drawn from a ChaCha stream keyed by
//! a master seed and a stream number (an event sequence number, a bootstrap
//! replicate index, ...). Replaying the same inputs therefore replays the same
//! draws regardless of evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ArenaRng = ChaCha8Rng;

/// Independent generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ArenaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes two words into one; used to derive sub-seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    // splitmix64 finaliser over a ^ rotated b
    let mut z = a ^ b.rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
