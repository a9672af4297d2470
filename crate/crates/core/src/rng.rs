//! Seeded random streams.
//!
//! A run is driven by one master seed. Each consumer derives its own stream
//! from `(master_seed, key, indices)` by hashing them into a ChaCha seed, so
//! streams are independent of each other and of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha20Rng;

pub fn substream(master_seed: u64, key: &str, indices: &[u64]) -> StreamRng {
    let mut h = Sha256::new();
    h.update(b"dpadapt-stream-v1");
    h.update(master_seed.to_le_bytes());
    h.update((key.len() as u64).to_le_bytes());
    h.update(key.as_bytes());
    for i in indices {
        h.update(i.to_le_bytes());
    }
    let digest = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha20Rng::from_seed(seed)
}
