//! Seed derivation. Every random stream in the crate is keyed by a `u64`
//! seed derived from one master seed, so results never depend on thread
//! scheduling or on the order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used with [`derive_seed`].
pub mod tag {
    pub const REPLICATION: u64 = 0x5245_504c;
    pub const TRUTH_DRAWS: u64 = 0x5452_5554;
    pub const PANEL: u64 = 0x5041_4e4c;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `(master, tag, index)`.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ tag) ^ index)
}

/// A ChaCha8 generator positioned on its own stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
