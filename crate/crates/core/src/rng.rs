//! Deterministic RNG derivation and small sampling helpers.
//!
//! Every stochastic routine in this crate derives its generator from explicit
//! integer keys, so results are reproducible and independent of thread count:
//! episode `i` of a dataset always uses stream `i` of a ChaCha generator keyed
//! by the dataset seed, and sweep replications key off
//! `(base_seed, cell_index, replication_index)`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Mixes a sequence of 64-bit keys into a single seed (splitmix64 chain).
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        state = state.wrapping_add(p).wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        state = z ^ (z >> 31);
    }
    state
}

/// Counter-based generator: one independent stream per `stream` index under a
/// shared key. Workers processing different indices produce identical output
/// regardless of scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws an index from an unnormalized-tolerant categorical distribution.
///
/// Probabilities are scanned cumulatively; any floating tail mass past the
/// last positive entry falls back to that entry.
pub fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// FNV-1a over raw bytes; stable across platforms and Rust versions, used for
/// provenance hashes in dataset metadata (not for security).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hex-encoded FNV-1a hash of a canonical byte serialization.
pub fn stable_hash_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}
