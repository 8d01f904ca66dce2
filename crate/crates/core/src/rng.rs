//! Seeded sub-streams.
//!
//! Every sampling task draws from its own SplitMix64 stream. The stream seed
//! is `splitmix64(seed ^ splitmix64(task))`, so streams are independent of
//! the order in which tasks run and identical on every platform.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the generator for sub-task `task` of a run seeded with `seed`.
pub fn stream(seed: u64, task: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(splitmix64(seed ^ splitmix64(task)))
}
