//! Counter-based random streams.
//!
//! Every consumer derives its generator from `(seed, domain, position)` so
//! results do not depend on evaluation order or thread count. Bounded
//! draws and shuffles are implemented here rather than borrowed from a
//! distribution crate, keeping streams stable across dependency upgrades.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream identifiers; one per independent use of a seed.
pub mod domain {
    pub const SPLIT: u64 = 1;
    pub const SYNTH_CLASS: u64 = 2;
    pub const SYNTH_TRANSITION: u64 = 3;
    pub const PERTURB: u64 = 4;
}

/// ChaCha8 generator positioned at `offset` 64-bit words into stream `domain`.
pub fn stream(seed: u64, domain: u64, offset: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(domain);
    // Word position counts 32-bit words.
    rng.set_word_pos(u128::from(offset) * 2);
    rng
}

/// Uniform in [0, 1) with 53 bits of precision.
#[inline]
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in [0, n) by fixed-point multiplication. The bias is at
/// most n / 2^64, irrelevant for the sizes used here, and every call
/// consumes exactly one word.
#[inline]
pub fn below(rng: &mut impl RngCore, n: u64) -> u64 {
    ((u128::from(rng.next_u64()) * u128::from(n)) >> 64) as u64
}

/// Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}
