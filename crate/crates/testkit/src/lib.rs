//! Generators and reference oracles shared by the test suites.

pub mod abc_gen;
pub mod gen;
pub mod oracle;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic generator for a named test stream.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
