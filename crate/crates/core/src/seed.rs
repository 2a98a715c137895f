//! Counter-based seed derivation.
//!
//! Every stochastic stage draws from its own ChaCha stream keyed by a root
//! seed plus a small tuple of counters, so replication `r` of a run can be
//! regenerated in isolation and parallel scheduling never changes results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep streams for different stages apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Covariates = 1,
    Noise = 2,
    Ties = 3,
    Split = 4,
    Subsample = 5,
    Holdout = 6,
    Folds = 7,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and an ordered list of counters.
pub fn derive(root: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(root), |acc, &c| mix(acc ^ mix(c)))
}

/// Derives a child seed for a tagged stream.
pub fn derive_stream(root: u64, stream: Stream, index: u64) -> u64 {
    derive(root, &[stream as u64, index])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
