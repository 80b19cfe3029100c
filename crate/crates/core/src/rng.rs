//! Seeded random source threaded through stream combination and transforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG owned by one caller at a time.
#[derive(Debug, Clone)]
pub struct RngHandle(ChaCha8Rng);

impl RngHandle {
    pub fn seeded(seed: u64) -> Self {
        RngHandle(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn inner(&mut self) -> &mut ChaCha8Rng {
        &mut self.0
    }
}
