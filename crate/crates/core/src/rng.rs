//! Reproducible random streams.
//!
//! Every Monte Carlo sample draws from its own ChaCha8 stream. The key is
//! `(master seed, domain)` hashed into the ChaCha seed, and the sample index
//! selects the ChaCha stream, so sample `i` never depends on how many other
//! samples exist or which worker produced them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SampleRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn hash64(a: u64, b: u64) -> u64 {
    mix64(mix64(a) ^ b.rotate_left(17))
}

/// Hashes a point in space so that streams can be keyed by evaluation point.
pub fn hash_point(seed: u64, x: &[f64]) -> u64 {
    x.iter().fold(mix64(seed), |h, v| hash64(h, v.to_bits()))
}

/// Identifies a family of independent per-sample streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    key: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        StreamKey { key: mix64(master_seed) }
    }

    /// Derives an unrelated family, e.g. for a second noise source.
    pub fn derive(self, domain: u64) -> Self {
        StreamKey { key: hash64(self.key, domain) }
    }

    pub fn sample(self, index: u64) -> SampleRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.key);
        rng.set_stream(index);
        rng
    }
}
