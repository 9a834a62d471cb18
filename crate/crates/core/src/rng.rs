//! Deterministic random streams.
//!
//! Every replica of every experiment draws from its own stream, derived from
//! `(master seed, stream index)` only. Results therefore never depend on how
//! replicas are scheduled across worker threads.

use rand::{Rng, SeedableRng};
use rand_distr::{Exp1, Open01};
use rand_pcg::Pcg64Mcg;

/// The random stream type used throughout the crate.
pub type Stream = Pcg64Mcg;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream number `index` of the family rooted at `seed`.
pub fn stream(seed: u64, index: u64) -> Stream {
    let key = splitmix64(seed ^ splitmix64(index.wrapping_mul(0xD134_2543_DE82_EF95)));
    Stream::seed_from_u64(key)
}

/// Two-level stream index, e.g. `(schedule position, replica)`.
pub fn substream(seed: u64, family: u64, index: u64) -> Stream {
    stream(splitmix64(seed ^ splitmix64(family.wrapping_add(0xA076_1D64_78BD_642F))), index)
}

/// Uniform draw on the open interval (0, 1).
#[inline]
pub fn open01(rng: &mut Stream) -> f64 {
    rng.sample(Open01)
}

/// Standard exponential draw (rate 1).
#[inline]
pub fn exp1(rng: &mut Stream) -> f64 {
    rng.sample(Exp1)
}
