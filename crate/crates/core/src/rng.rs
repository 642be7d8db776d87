//! Deterministic random streams.
//!
//! Every random quantity in the crate comes from [`SimRng`], a PCG32
//! generator (64-bit LCG state, XSH-RR output; `Lcg64Xsh32` from `rand_pcg`)
//! constructed with an explicit `(seed, stream)` pair:
//!
//! * construction: `increment = (stream << 1) | 1`, `state = seed + increment`,
//!   then one LCG step `state = state * 6364136223846793005 + increment`;
//! * `next_u32`: output XSH-RR of the current state, then step;
//! * `next_u64`: `lo = next_u32()`, `hi = next_u32()`, result `hi << 32 | lo`;
//! * [`SimRng::uniform`]: `(next_u64() >> 11) * 2^-53`, in `[0, 1)`;
//! * [`SimRng::normal`]: Box-Muller, `u1 = 1 - uniform()`, `u2 = uniform()`,
//!   `sqrt(-2 ln u1) * cos(2 pi u2)`; the sine branch is discarded so every
//!   normal draw consumes exactly two `u64`s.
//!
//! These steps are all that is needed to reproduce a stream in another
//! language.

use rand_core::Rng;
use rand_pcg::Pcg32;

/// Stream used for interferogram noise and phase-shift jitter.
pub const STREAM_SIMULATION: u64 = 0x5eed_0001;
/// Stream used for per-sample object geometry in synthetic datasets.
pub const STREAM_GEOMETRY: u64 = 0x5eed_0002;
/// Stream used for dataset shuffling and splits.
pub const STREAM_SPLIT: u64 = 0x5eed_0003;
/// Stream used for network weight initialization.
pub const STREAM_INIT: u64 = 0x5eed_0004;
/// Stream used for the order in which training samples are visited.
pub const STREAM_SCHEDULE: u64 = 0x5eed_0005;

#[derive(Clone)]
pub struct SimRng {
    inner: Pcg32,
}

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            inner: Pcg32::new(seed, stream),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer draw in `lo..=hi`.
    pub fn int_in(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        let span = (hi - lo + 1) as f64;
        lo + ((self.uniform() * span) as usize).min(hi - lo)
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle driven by [`SimRng::int_in`], last index first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.int_in(0, i);
            items.swap(i, j);
        }
    }
}

impl std::fmt::Debug for SimRng {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SimRng")
    }
}

/// Derives a child seed from a master seed and an index (SplitMix64 finalizer).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
