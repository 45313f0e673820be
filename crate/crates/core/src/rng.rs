//! Seeded randomness.
//!
//! All streams are SplitMix64 (a 64-bit counter-based generator: a Weyl
//! sequence with increment `0x9E3779B97F4A7C15` passed through a fixed
//! finalizer). Uniform floats and shuffles are derived from raw `u64` draws
//! with the explicit formulas below so that they do not depend on
//! distribution internals of any particular `rand` release.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub type Rng = SplitMix64;

pub fn seeded(seed: u64) -> Rng {
    SplitMix64::seed_from_u64(seed)
}

/// Independent stream for a `(seed, purpose, index)` triple.
pub fn derived(seed: u64, purpose: u64, index: u64) -> Rng {
    let mut mix = seeded(seed ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03));
    let base = mix.next_u64();
    seeded(base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform in `[0, 1)` with 53 bits of resolution.
pub fn unit_f64(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform in `[-r, r)`.
pub fn symmetric(rng: &mut Rng, r: f64) -> f64 {
    (2.0 * unit_f64(rng) - 1.0) * r
}

/// Fisher-Yates shuffle, swapping position `i` (descending) with
/// `next_u64() % (i + 1)`.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

pub const PURPOSE_INIT: u64 = 1;
pub const PURPOSE_SHUFFLE: u64 = 2;
pub const PURPOSE_SYNTH: u64 = 3;
