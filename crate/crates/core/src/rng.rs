//! Seeded random streams.
//!
//! Every random draw in the crate comes from one user seed split into named
//! sub-streams ("data", "init", "sampling", ...), so that changing how often
//! one component draws never shifts the numbers another component sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Independent generator for sub-stream `name` of `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.bytes()));
    rng
}

/// Like [`stream`], further split by an index (one stream per sequence,
/// per epoch, per parameter, ...).
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name.bytes().chain(index.to_le_bytes())));
    rng
}

/// Derives a child seed, used when a component takes a plain `u64` seed.
pub fn derive_seed(seed: u64, name: &str, index: u64) -> u64 {
    use rand::RngCore;
    indexed_stream(seed, name, index).next_u64()
}
