//! Counter-based random streams keyed by `(master_seed, domain, index)`.
//!
//! Each stream is a ChaCha8 keystream: the key is built from the master
//! seed and a domain tag, the 64-bit stream id is the path (or point)
//! index. Streams never overlap and can be created in any order, so
//! ensembles give the same result regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Domain tag for regime paths of the PDMP.
pub const DOMAIN_PATHS: u64 = 0x5041_5448;
/// Domain tag for reachable-set sampling.
pub const DOMAIN_GAMMA: u64 = 0x4741_4d4d;

pub fn stream(master_seed: u64, domain: u64, index: u64) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// The stream driving regime path `path_index` of an ensemble.
pub fn path_stream(master_seed: u64, path_index: u64) -> Stream {
    stream(master_seed, DOMAIN_PATHS, path_index)
}
