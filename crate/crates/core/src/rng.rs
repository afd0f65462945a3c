//! Deterministic random substreams.
//!
//! Every stochastic draw in a run comes from a ChaCha stream whose seed is a
//! pure function of the master seed and a key (purpose, round, satellites...).
//! Results therefore do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags mixed into substream keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Link = 1,
    Train = 2,
    Downlink = 3,
    Uplink = 4,
    Shard = 5,
    Init = 6,
    DataTransfer = 7,
    Architecture = 8,
    Dataset = 9,
    Edge = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `seed` together with `parts` into a new 64-bit seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn substream(seed: u64, stream: Stream, parts: &[u64]) -> SimRng {
    let mut key = Vec::with_capacity(parts.len() + 1);
    key.push(stream as u64);
    key.extend_from_slice(parts);
    SimRng::seed_from_u64(derive_seed(seed, &key))
}
