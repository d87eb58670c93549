//! Deterministic random number generation.
//!
//! All stochastic code in this crate draws from [`Rng8`] (ChaCha8), seeded
//! explicitly. The same seed therefore produces bit-identical episode resets,
//! scripted trajectories, minibatch indices, and network initializations on
//! every platform. Gaussian variates are produced by Box-Muller on top of the
//! stream so no platform `libm` differences can creep in through a
//! distribution crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng8 = ChaCha8Rng;

/// Builds the crate-wide generator from a 64-bit seed.
pub fn seeded(seed: u64) -> Rng8 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for a sub-task (episode index, net init, ...).
///
/// Plain multiplying-and-adding keeps derivation reproducible and cheap; the
/// odd multiplier decorrelates neighbouring indices.
pub fn derive(base: u64, index: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(1)
}

/// Uniform draw from [lo, hi).
pub fn uniform(rng: &mut Rng8, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

/// One standard normal variate via Box-Muller.
pub fn standard_normal(rng: &mut Rng8) -> f64 {
    // gen::<f64>() lies in [0, 1); shift away from zero before the log.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// Normal variate with the given mean and standard deviation.
pub fn normal(rng: &mut Rng8, mean: f64, std: f64) -> f64 {
    mean + std * standard_normal(rng)
}

/// Fills `out` with standard normal variates.
pub fn fill_standard_normal(rng: &mut Rng8, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = standard_normal(rng);
    }
}
