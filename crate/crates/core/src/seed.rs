//! Named, reproducible sub-streams derived from a single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Hashes a base seed, a stream label and integer coordinates into a new seed.
/// The same inputs always give the same seed, and changing any coordinate
/// gives an unrelated one.
pub fn derive_seed(base: u64, label: &str, coords: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for c in coords {
        h.update(c.to_le_bytes());
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn derive_rng(base: u64, label: &str, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label, coords))
}

/// Degrees are hashed in thousandths so that `0.3` and `0.1 + 0.2` agree.
pub fn degree_key(degree: f64) -> u64 {
    (degree * 1000.0).round() as u64
}
