//! Counter-based random numbers for reproducible sampling.
//!
//! Every draw is a pure function of `(seed, index, lane)`: there is no
//! mutable generator state to thread through a computation. Sample `i` is
//! therefore identical whether samples are produced one at a time, in
//! batches, or from parallel workers, and independent streams are obtained
//! by deriving child seeds rather than by partitioning a single sequence.

/// Stateless counter-based generator.
///
/// Internally this hashes the `(seed, index, lane)` triple through three
/// rounds of the SplitMix64 finalizer, which is the standard avalanche
/// function behind `SplittableRandom`-style generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    seed: u64,
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Derive a decorrelated child seed for an independent stream
    /// (e.g. bootstrap resampling vs. point sampling within one study).
    pub fn derive(&self, label: u64) -> CounterRng {
        CounterRng {
            seed: mix64(self.seed ^ mix64(label)),
        }
    }

    /// Raw 64 random bits for counter `(index, lane)`.
    #[inline]
    pub fn bits(&self, index: u64, lane: u64) -> u64 {
        mix64(mix64(mix64(self.seed) ^ index) ^ lane)
    }

    /// Uniform draw in `[0, 1)` with 53-bit resolution.
    #[inline]
    pub fn unit(&self, index: u64, lane: u64) -> f64 {
        // Top 53 bits scaled by 2^-53; yields every representable multiple.
        (self.bits(index, lane) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[-1, 1)`.
    #[inline]
    pub fn symmetric_unit(&self, index: u64, lane: u64) -> f64 {
        2.0 * self.unit(index, lane) - 1.0
    }

    /// Uniform integer in `[0, bound)`. `bound` must be nonzero.
    ///
    /// Uses the multiply-shift reduction; the modulo bias is at most
    /// `bound / 2^64`, which is negligible for the resample sizes used here.
    #[inline]
    pub fn index(&self, index: u64, lane: u64, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.bits(index, lane) as u128 * bound as u128) >> 64) as u64
    }
}
