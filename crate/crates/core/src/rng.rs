//! Seeded random streams.
//!
//! Every stochastic routine in the crate takes an explicit generator. Workers
//! that run in parallel each get their own ChaCha stream keyed by
//! `(seed, stream_id)`, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Independent stream `stream_id` of the generator family rooted at `seed`.
pub fn stream_rng(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Seed for the `index`-th member of a family rooted at `seed`
/// (one splitmix64 step), so neighbouring indices get unrelated seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Well-known stream ids, so that different subsystems drawing from the same
/// seed never share a stream.
pub mod streams {
    pub const SCENARIO: u64 = 0;
    pub const GA: u64 = 1;
    pub const BASELINE: u64 = 2;
    pub const ALLOCATION: u64 = 3;
    pub const DETECTIONS: u64 = 4;
    pub const DEGRADE: u64 = 5;
    pub const MONTE_CARLO: u64 = 6;
}
