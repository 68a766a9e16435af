//! Deterministic random streams derived from one 64-bit seed.
//!
//! Every consumer asks for a numbered stream; ChaCha's stream parameter keeps
//! them independent without any coordination between modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known stream ids so independent modules never share a sequence.
pub mod streams {
    pub const GP_MAPS: u64 = 1;
    pub const TANTRUM_Q: u64 = 2;
    pub const INIT: u64 = 3;
    pub const REPLAY: u64 = 4;
    pub const TRAJECTORY: u64 = 5;
    pub const AUDIT: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const RANDOM_TREE: u64 = 8;
}

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
