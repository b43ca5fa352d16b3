//! Seeded random streams.
//!
//! Every random draw in a trial comes from a stream identified by
//! `(master_seed, purpose, index)`, so adding robots or steps never perturbs
//! the draws of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for independent random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Formation = 1,
    Topology = 2,
    AttackTargets = 3,
    AttackOffsets = 4,
    EstimationNoise = 5,
    RangeNoise = 6,
    ProcessNoise = 7,
    OutputNoise = 8,
    InitialState = 9,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    let a = splitmix(seed);
    let b = splitmix(a ^ (purpose as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
    let c = splitmix(b ^ index);
    ChaCha8Rng::seed_from_u64(c)
}

/// Stream keyed additionally by a robot id (or edge id).
pub fn robot_stream(seed: u64, purpose: Purpose, step: u64, robot: u64) -> StreamRng {
    stream(splitmix(seed ^ robot.wrapping_mul(0xa076_1d64_78bd_642f)), purpose, step)
}
