//! Deterministic seed derivation.
//!
//! Every stochastic stage draws from a ChaCha20 stream whose key is derived
//! from `(base seed, label, index)` with SHA-256, so stages never share RNG
//! state and chunked work is independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Derive a 64-bit child seed from a parent seed, a domain label and an index.
pub fn derive_seed(base: u64, label: &str, index: u64) -> u64 {
    let digest = derive_key(base, label, index);
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn derive_key(base: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"qrng-seed-v1");
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(base.to_le_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// RNG for a plain 64-bit seed.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_key(seed, "rng", 0))
}

/// RNG for the `index`-th chunk of the stream labelled `label`.
pub fn chunk_rng(base: u64, label: &str, index: u64) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(derive_key(base, label, index))
}
