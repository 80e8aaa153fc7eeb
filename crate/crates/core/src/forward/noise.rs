//! Counter-based noise streams: every `(seed, path, lattice slot)` triple
//! addresses its own ChaCha8 keystream position, independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
pub(crate) struct NoiseSource {
    base: ChaCha8Rng,
}

impl NoiseSource {
    pub(crate) fn new(seed: u64) -> Self {
        NoiseSource { base: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Stream for one step of one path. Each slot owns 2^32 words.
    pub(crate) fn at(&self, path: u64, slot: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(path);
        rng.set_word_pos((slot as u128) << 32);
        rng
    }
}
