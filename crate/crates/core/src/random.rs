//! Deterministic random source shared by every stochastic operation.

use rand::SeedableRng;

pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
