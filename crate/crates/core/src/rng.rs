//! Seeded, splittable randomness.
//!
//! Every campaign derives one ChaCha stream per unit of parallel work
//! (setting, shot block, seed index), so results are byte-identical no
//! matter how many worker threads execute the units.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

/// Root generator for a campaign.
pub fn master(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `idx` under the same seed. Streams never collide
/// with each other or with the master stream (stream 0 is reserved).
pub fn stream(seed: u64, idx: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx.wrapping_add(1));
    rng
}
