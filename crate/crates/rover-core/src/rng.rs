//! Seed-derived random streams.
//!
//! Every randomized stage (scene jitter, deviation sampling, oracle noise,
//! frame shuffling) draws from its own ChaCha stream derived from the run
//! seed plus a stable string label. Streams are independent of iteration
//! order and identical across platforms, which is what makes reruns
//! byte-reproducible.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a deterministic RNG from a base seed and a stream label.
pub fn derive_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Derive a sub-seed (for labeling artifacts with the stream they used).
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is wide enough"))
}
