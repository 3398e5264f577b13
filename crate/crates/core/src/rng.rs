//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 keystream selected by `(seed, index)`, so a
//! draw depends only on the seed and the stream index, never on which
//! worker produced it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct StreamFactory {
    base: ChaCha8Rng,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream number `index`.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(0);
        rng
    }

    /// Seed for child number `index`, used to split a master seed into replica seeds.
    pub fn child_seed(&self, index: u64) -> u64 {
        self.stream(index).next_u64()
    }
}
