use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

/// Deterministic SplitMix64 generator.
///
/// Uniform draws take the top 53 bits of the next output and scale them into
/// `[0, 1)`. Gaussian draws use the cosine branch of Box–Muller on two fresh
/// uniforms, `sqrt(-2 ln(1 - u1)) * cos(2π u2)`, so every gaussian consumes
/// exactly two outputs of the underlying stream.
#[derive(Debug, Clone)]
pub struct Prng {
    inner: SplitMix64,
}

impl Prng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    /// Derives an independent generator seeded from this stream.
    pub fn split(&mut self) -> Prng {
        Prng::new(self.inner.next_u64())
    }

    pub fn next_uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(self);
    }
}

impl RngCore for Prng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
