//! Stable hashing and seeded RNG derivation.
//!
//! All randomness in the pipeline flows from one user-supplied seed. Derived
//! generators are keyed by content (scenario ids, trial ids, purpose tags)
//! through SHA-256 so results do not depend on execution order or platform.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Stable 32-byte digest of the given parts, with length framing so that
/// `["ab","c"]` and `["a","bc"]` hash differently.
pub fn stable_digest(parts: &[&str]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    hasher.finalize().into()
}

/// Hex-encoded 128-bit content id derived from the given parts.
pub fn content_id(parts: &[&str]) -> String {
    hex::encode(&stable_digest(parts)[..16])
}

/// Deterministic RNG derived from a seed and a content key.
pub fn derived_rng(seed: u64, parts: &[&str]) -> ChaCha8Rng {
    let mut all: Vec<&str> = Vec::with_capacity(parts.len() + 1);
    let seed_str = seed.to_string();
    all.push(&seed_str);
    all.extend_from_slice(parts);
    ChaCha8Rng::from_seed(stable_digest(&all))
}
