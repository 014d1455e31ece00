//! Deterministic random streams.
//!
//! Every stochastic step in the library draws from a ChaCha8 stream whose
//! seed is derived from a root seed plus a structured key (generation,
//! individual, operator tag, tensor name, ...). Identical keys give
//! identical streams on every platform, which is what makes merged
//! checkpoints and search runs reproducible bit-for-bit.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Good avalanche, stable across platforms.
fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over a byte string, for folding names into stream keys.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Builds a 64-bit stream key from a root seed and structured parts.
#[derive(Debug, Clone, Copy)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(mix64(seed))
    }

    /// Fold an integer component (generation, index, ...) into the key.
    pub fn with(self, part: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(part)))
    }

    /// Fold a name component (operator tag, tensor name, ...) into the key.
    pub fn with_str(self, part: &str) -> Self {
        StreamKey(mix64(self.0 ^ fnv1a(part.as_bytes())))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    /// A ChaCha8 generator seeded by this key.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// A uniform draw in [0, 1) addressed by a final counter, without
    /// instantiating a generator. Used for per-element Bernoulli masks
    /// where each element must be addressable independently.
    pub fn unit_at(self, counter: u64) -> f64 {
        let bits = mix64(self.0 ^ mix64(counter.wrapping_add(0x51ed_270b)));
        // 53 high bits -> [0, 1)
        (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
