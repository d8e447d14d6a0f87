//! Deterministic seed derivation for parallel work items.
//!
//! Every task, grid cell, shot and trial owns its own random stream, derived
//! from the experiment's root seed and the item's coordinates. Results are
//! therefore independent of worker count and scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derives a child seed from a root seed and a list of coordinate tags.
///
/// Tags are length-prefixed before hashing so that `["ab", "c"]` and
/// `["a", "bc"]` produce different seeds.
pub fn child_seed(root: u64, tags: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(root.to_le_bytes());
    for tag in tags {
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

/// A reproducible RNG for the given root seed and coordinates.
pub fn child_rng(root: u64, tags: &[&str]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(root, tags))
}

/// A reproducible RNG seeded directly.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
