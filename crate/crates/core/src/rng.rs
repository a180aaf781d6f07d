//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from the
//! run seed, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids used by the engine.
pub mod streams {
    pub const MODEL_INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const LEARNER: u64 = 3;
    pub const VALIDATION: u64 = 4;
    pub const HOLDOUT: u64 = 5;
    pub const CHAINS: u64 = 6;
}
