// SPDX-License-Identifier: Apache-2.0

//! Seeded random streams.
//!
//! Every random decision in the crate draws from a ChaCha8 stream whose key
//! is `SHA-256(seed_le || len(domain)_le || domain || index_le)`. A stream
//! depends only on its `(seed, domain, index)` triple, so one epoch of a
//! curriculum can be regenerated without replaying the others.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn stream(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((domain.len() as u64).to_le_bytes());
    hasher.update(domain.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Shuffle `items` in place with the stream for `(seed, domain, index)`.
pub fn shuffle_with<T>(items: &mut [T], seed: u64, domain: &str, index: u64) {
    let mut rng = stream(seed, domain, index);
    items.shuffle(&mut rng);
}
