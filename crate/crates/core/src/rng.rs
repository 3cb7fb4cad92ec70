//! Named random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stream for `(name, ordinal)` under `master`. Distinct names or ordinals
/// give unrelated streams; the same triple always gives the same stream.
pub fn stream(master: u64, name: &str, ordinal: u64) -> StreamRng {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((name.len() as u64).to_le_bytes());
    h.update(name.as_bytes());
    h.update(ordinal.to_le_bytes());
    let out = h.finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&out[..32]);
    ChaCha8Rng::from_seed(seed)
}

/// 64-bit child seed, for handing to components that take a plain seed.
pub fn child_seed(master: u64, name: &str, ordinal: u64) -> u64 {
    use rand::RngCore;
    stream(master, name, ordinal).next_u64()
}

/// Hex SHA-256 of arbitrary bytes.
pub fn digest_hex(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().map(|b| format!("{b:02x}")).collect()
}
