//! Seed derivation and the simulation random number generator.
//!
//! Every stream is a [`ChaCha8Rng`] seeded through `seed_from_u64`. Derived
//! seeds are produced with the SplitMix64 finalizer:
//!
//! ```text
//! mix(x)        = splitmix64(x)
//! derive(s, k)  = mix(s ^ mix(k))
//! cell_seed     = derive(derive(derive(base, occupancy), run), 0)
//! stream(c, i)  = derive(c, STREAM_BASE + i)
//! ```
//!
//! Integer draws are always taken over `u32` ranges so results do not depend
//! on the target's pointer width.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(seed: u64, key: u64) -> u64 {
    mix(seed ^ mix(key))
}

const STREAM_BASE: u64 = 0x5EED_0000;

/// Named sub-streams of one experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Occupancy = 1,
    Fire = 2,
    Behavior = 3,
    ExecBehavior = 4,
    ExecFire = 5,
}

pub fn cell_seed(base: u64, occupancy: u32, run: u32) -> u64 {
    derive(derive(derive(base, occupancy as u64), run as u64), 0)
}

pub fn stream(cell: u64, s: Stream) -> u64 {
    derive(cell, STREAM_BASE + s as u64)
}
