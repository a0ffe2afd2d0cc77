//! Deterministic random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator whose
//! 64-bit seed is `mix(master_seed, replica, tag)`. The mixing applies the
//! SplitMix64 finalizer to each input in turn, so distinct
//! `(seed, replica, tag)` triples give unrelated streams and ensembles can be
//! generated in any order or in parallel with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags separating the uses of one `(seed, replica)` pair.
pub mod tag {
    pub const CONFIGURATION: u64 = 0x636f_6e66;
    pub const WALK: u64 = 0x7761_6c6b;
    pub const LAPLACE_MC: u64 = 0x6c6d_6331;
    pub const COLORS: u64 = 0x636f_6c72;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn mix(seed: u64, replica: u64, tag: u64) -> u64 {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ replica);
    splitmix64(h ^ tag)
}

pub fn stream(seed: u64, replica: u64, tag: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix(seed, replica, tag))
}
