//! Deterministic per-sample random streams.
//!
//! Every stream is a ChaCha8 generator keyed by SHA-256 over a domain tag,
//! the master seed and a stream index, so sample `i` draws the same values
//! regardless of which worker produces it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

pub fn derive_seed(tag: &str, master_seed: u64, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update([0u8]);
    h.update(master_seed.to_le_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// Generator for synthetic sample `index` under `master_seed`.
pub fn sample_rng(master_seed: u64, index: u64) -> StreamRng {
    ChaCha8Rng::from_seed(derive_seed("labelsynth/sample", master_seed, index))
}

/// Independent generator for an arbitrary named sub-task.
pub fn stream_rng(tag: &str, master_seed: u64, index: u64) -> StreamRng {
    ChaCha8Rng::from_seed(derive_seed(tag, master_seed, index))
}
