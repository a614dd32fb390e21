use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exponential backoff: 1 ms base, doubling, capped at 1 s. Each delay is
/// drawn uniformly from the upper half of the nominal step.
#[derive(Debug, Clone)]
pub struct Backoff {
    base: Duration,
    cap: Duration,
    attempt: u32,
    rng: ChaCha8Rng,
}

impl Backoff {
    pub const BASE: Duration = Duration::from_millis(1);
    pub const CAP: Duration = Duration::from_secs(1);

    pub fn new(seed: u64) -> Self {
        Self {
            base: Self::BASE,
            cap: Self::CAP,
            attempt: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Nominal (un-jittered) delay for the given retry number.
    pub fn nominal(&self, attempt: u32) -> Duration {
        let factor = 1u64 << attempt.min(20);
        self.base.saturating_mul(factor as u32).min(self.cap)
    }

    pub fn next_delay(&mut self) -> Duration {
        let nominal = self.nominal(self.attempt);
        self.attempt = self.attempt.saturating_add(1);
        let half = nominal / 2;
        let jitter = self.rng.gen_range(0..=half.as_nanos() as u64);
        half + Duration::from_nanos(jitter)
    }

    pub fn attempt(&self) -> u32 {
        self.attempt
    }

    pub fn reset(&mut self) {
        self.attempt = 0;
    }
}
