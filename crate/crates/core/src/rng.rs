//! Seeded random streams.
//!
//! Every consumer of randomness gets its own named stream derived from a run
//! seed, so that changing how one consumer draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Named streams used by the training harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    DataSampling,
    ModelInit,
    Selection,
    Corpus,
    Evaluation,
}

impl Stream {
    fn tag(self) -> &'static str {
        match self {
            Stream::DataSampling => "data-sampling",
            Stream::ModelInit => "model-init",
            Stream::Selection => "selection",
            Stream::Corpus => "corpus",
            Stream::Evaluation => "evaluation",
        }
    }
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent generator for `stream` from a run seed.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    seeded(derive_seed(seed, stream.tag()))
}

pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09_e667_f3bc_c908);
    for b in tag.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over raw bytes followed by a splitmix finalizer. Stable across
/// platforms and releases, unlike `std::hash`.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_independent_and_reproducible() {
        let mut a = stream(7, Stream::DataSampling);
        let mut b = stream(7, Stream::DataSampling);
        let mut c = stream(7, Stream::Selection);
        let xa = a.next_u64();
        assert_eq!(xa, b.next_u64());
        assert_ne!(xa, c.next_u64());
    }

    #[test]
    fn stable_hash_is_pinned() {
        assert_eq!(stable_hash(b"abc"), stable_hash(b"abc"));
        assert_ne!(stable_hash(b"abc"), stable_hash(b"abd"));
    }
}
