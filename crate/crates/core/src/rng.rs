//! Seeded random state with counted draws and splitmix64 substreams.

use rand::distributions::Open01;
use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// 2^64 divided by the golden ratio, the splitmix64 increment.
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th independent substream of `seed`.
pub fn substream_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ index.wrapping_mul(GOLDEN_GAMMA))
}

/// Xoshiro256++ generator that counts every 32/64-bit draw it hands out.
///
/// Bit-exact across platforms for a given seed.
#[derive(Debug, Clone)]
pub struct RandomState {
    inner: Xoshiro256PlusPlus,
    draws: u64,
}

impl RandomState {
    pub fn from_seed(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
            draws: 0,
        }
    }

    pub fn substream(seed: u64, index: u64) -> Self {
        Self::from_seed(substream_seed(seed, index))
    }

    /// Number of raw draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Uniform on the open interval (0, 1).
    #[inline]
    pub fn uniform_open01(&mut self) -> f64 {
        self.sample(Open01)
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform01(&mut self) -> f64 {
        self.gen::<f64>()
    }

    /// Uniform integer in [0, bound), `bound > 0`.
    ///
    /// Lemire's multiply-shift with rejection; a retry happens with
    /// probability below `bound / 2^32`.
    #[inline]
    pub fn below(&mut self, bound: u32) -> u32 {
        debug_assert!(bound > 0);
        let mut m = u64::from(self.next_u32()) * u64::from(bound);
        if (m as u32) < bound {
            let threshold = bound.wrapping_neg() % bound;
            while (m as u32) < threshold {
                m = u64::from(self.next_u32()) * u64::from(bound);
            }
        }
        (m >> 32) as u32
    }
}

impl RngCore for RandomState {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.draws += 1;
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.draws += 1;
        self.inner.try_fill_bytes(dest)
    }
}
