//! Deterministic random streams derived from a master seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent stream `index` of the generator keyed by `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed for replication `index` of an experiment keyed by `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index).next_u64()
}
