//! Deterministic child RNG streams.
//!
//! A child stream is keyed by a root seed, a list of tags (for example the
//! grid value `J`) and a task index. The resulting generator depends only on
//! those values, never on which thread draws from it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default seed used by the CLI and the config files when none is given.
pub const DEFAULT_SEED: u64 = 20_240_917;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a root seed with tags into a new 64-bit seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// ChaCha8 generator for task `index` under `(seed, tags)`.
pub fn child_rng(seed: u64, tags: &[u64], index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, tags));
    rng.set_stream(index);
    rng
}
