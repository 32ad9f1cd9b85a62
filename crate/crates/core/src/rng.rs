//! Counter-based seeding. Every random stream in the crate is derived from a
//! run seed plus a tuple of counters, so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a list of counters into a new 64-bit seed.
pub fn derive_seed(seed: u64, counters: &[u64]) -> u64 {
    counters.iter().fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng_for(seed: u64, counters: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, counters))
}
