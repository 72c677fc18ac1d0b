//! Seed derivation for independent random streams.
//!
//! Every consumer of randomness derives its own generator from a root seed
//! and a domain label, so adding or reordering draws in one component never
//! shifts the sequence another component sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Derives a generator for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: &str, index: u64) -> StreamRng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Derives a child seed, for APIs that take a plain `u64`.
pub fn derive_seed(seed: u64, domain: &str, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain, index).next_u64()
}
