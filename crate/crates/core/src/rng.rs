//! Keyed random streams.
//!
//! Every random quantity is drawn from a ChaCha stream whose key is derived
//! from the user seed plus a path of tags (layer, component, attempt, ...).
//! Results therefore do not depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type KeyedRng = ChaCha12Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 256-bit key from a seed and a tag path.
pub fn derive_key(seed: u64, tags: &[u64]) -> [u8; 32] {
    let mut lanes = [
        splitmix64(seed),
        splitmix64(seed ^ 0xA5A5_A5A5_A5A5_A5A5),
        splitmix64(seed.rotate_left(17)),
        splitmix64(seed.rotate_left(41) ^ 0x5DEE_CE66_D1CE_4E5B),
    ];
    for (pos, &tag) in tags.iter().enumerate() {
        let t = splitmix64(tag ^ (pos as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for (l, lane) in lanes.iter_mut().enumerate() {
            *lane = splitmix64(*lane ^ t.rotate_left(13 * l as u32 + 7));
        }
    }
    let mut out = [0u8; 32];
    for (chunk, lane) in out.chunks_exact_mut(8).zip(lanes) {
        chunk.copy_from_slice(&lane.to_le_bytes());
    }
    out
}

pub fn keyed_rng(seed: u64, tags: &[u64]) -> KeyedRng {
    ChaCha12Rng::from_seed(derive_key(seed, tags))
}

/// A 64-bit seed for a sub-experiment, derived like a stream key.
pub fn sub_seed(seed: u64, tags: &[u64]) -> u64 {
    let k = derive_key(seed, tags);
    u64::from_le_bytes(k[..8].try_into().expect("8 bytes"))
}

/// Stream tags used across the crate, kept distinct so streams never collide.
pub mod tags {
    pub const WAVELET: u64 = 1;
    pub const FBM: u64 = 2;
    pub const STATIONARY: u64 = 3;
    pub const STRUCTURE: u64 = 10;
    pub const DGP_NODE: u64 = 11;
    pub const DATA_DESIGN: u64 = 20;
    pub const DATA_NOISE: u64 = 21;
    pub const MCMC: u64 = 30;
    pub const MCMC_INIT: u64 = 31;
    pub const MCMC_STRUCTURE: u64 = 32;
    pub const CLI_SAMPLE: u64 = 50;
    pub const CLI_PRIOR_DRAW: u64 = 51;
    pub const CLI_DATA: u64 = 52;
    pub const CLI_TRUTH: u64 = 53;
}
