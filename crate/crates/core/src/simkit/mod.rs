//! Synthetic movies with known scene structure and a mock backend that
//! answers from that structure through controllable noise.

mod generator;
mod mock;

use sha2::{Digest, Sha256};

pub use generator::{
    generate_corpus, generate_movie, movie_id, write_corpus, SynthError, SyntheticConfig, SyntheticMovie,
};
pub use mock::{
    is_degraded, mock_generate, EdgeDegradation, MockBackend, MockTruth, NoiseError, NoiseParams,
    RecordingBackend,
};

/// 64-bit seed from length-prefixed parts.
pub(crate) fn derive_seed(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}
