//! Seed plumbing. Every random decision is drawn from a named sub-stream of
//! one user seed, so toggling one stage never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives an independent generator for `(seed, name)`.
pub fn stream(seed: u64, name: &str) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    Rng::from_seed(h.finalize().into())
}

/// Derives a child seed, e.g. one per sample index.
pub fn child_seed(seed: u64, name: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}
