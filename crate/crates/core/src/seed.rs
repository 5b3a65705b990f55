//! Counter-based seed derivation.
//!
//! Every stochastic draw in the crate is keyed by `(master, stream, index...)`
//! and mixed through SplitMix64, so results do not depend on evaluation order
//! and parallel trials reproduce sequential ones bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with an ordered list of counters.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// The RNG used throughout the crate. ChaCha8 output is stable across
/// platforms and crate versions, unlike `StdRng`.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags so unrelated subsystems never share a seed path.
pub mod stream {
    pub const CHANNEL_RANGING: u64 = 1;
    pub const CHANNEL_DISAMBIGUATION: u64 = 2;
    pub const COHERENCE_TRIAL: u64 = 3;
    pub const SCENARIO_PULSE: u64 = 4;
    pub const SCENARIO_WEATHER: u64 = 5;
    pub const TRACE_SEGMENT: u64 = 6;
    pub const OSCILLATOR: u64 = 7;
    pub const PLANT: u64 = 8;
}
