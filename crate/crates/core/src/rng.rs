//! Seeding contract shared by every stochastic routine.
//!
//! All draws come from ChaCha8 (a counter-based stream cipher generator)
//! seeded through `seed_from_u64`. Trial `i` of a repeated experiment uses
//! seed `base + i` (wrapping), so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in run metadata so that outputs can be traced to their generator.
pub const RNG_IDENTITY: &str = "rand_chacha::ChaCha8Rng/seed_from_u64 (rand_chacha 0.9)";

pub type SimRng = ChaCha8Rng;

pub fn rng_for(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn trial_seed(base: u64, trial: u64) -> u64 {
    base.wrapping_add(trial)
}
