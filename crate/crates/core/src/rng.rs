//! Deterministic derivation of independent random streams.
//!
//! Every stochastic loop that may run in parallel draws from a stream keyed by
//! the run seed plus its position (iteration, particle, ...), so results do not
//! depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream-purpose tags, mixed into the key so distinct uses never collide.
pub mod tag {
    pub const CHAIN: u64 = 1;
    pub const PARTICLE: u64 = 2;
    pub const RESAMPLE: u64 = 3;
    pub const TRAJECTORY: u64 = 4;
    pub const ENSEMBLE: u64 = 5;
    pub const TRUTH: u64 = 6;
    pub const OBSERVATION: u64 = 7;
    pub const FORECAST: u64 = 8;
    pub const INIT: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A stream keyed by `seed` and an arbitrary path of indices.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let mut h = splitmix64(seed);
    for &p in path {
        h = splitmix64(h ^ splitmix64(p.wrapping_add(0x51_7C_C1_B7)));
    }
    ChaCha8Rng::seed_from_u64(h)
}
