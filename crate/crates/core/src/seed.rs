//! Counter-based seed derivation.
//!
//! Every parallel unit of work (a rollout, a trial, an optimizer start) gets
//! its own generator seeded from `(master, stream, index)`. The mapping is a
//! pure function, so results never depend on scheduling order:
//!
//! ```text
//! seed = splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)
//! ```
//!
//! Streams separate unrelated consumers that share a master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub mod stream {
    pub const TRAIN: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const FIXED_POINT: u64 = 3;
    pub const PHYSICAL_TRIAL: u64 = 4;
    pub const NEURAL: u64 = 5;
    pub const INIT: u64 = 6;
    pub const EVAL: u64 = 7;
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream)) ^ index)
}

pub fn rng_for(master: u64, stream: u64, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, index))
}
