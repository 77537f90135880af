//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a base
//! seed mixed with a path of stream identifiers (epoch, batch, index, ...).
//! Mixing is SplitMix64, so neighbouring paths give unrelated streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and a stream path.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(base), |acc, &part| splitmix(acc ^ splitmix(part)))
}

pub fn rng(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, path))
}

/// Stream tags, kept distinct so the generator, split, init and training
/// never share a stream for the same base seed.
pub mod stream {
    pub const CORPUS: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const INIT_TEXT: u64 = 3;
    pub const INIT_SPECTRUM: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const DROPOUT: u64 = 6;
    pub const VAL_ORDER: u64 = 7;
    pub const GRAD_CHECK: u64 = 8;
}
