//! Seed derivation for reproducible, scheduling-independent random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream whose seed is a
//! hash of the master seed and a fixed path of integer labels (purpose tag,
//! outer step, replica, ...). Work may be split across any number of threads
//! without changing a single bit of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels; distinct purposes never share a stream.
pub mod tag {
    pub const INIT: u64 = 0x1001;
    pub const BROWNIAN: u64 = 0x1002;
    pub const ULMC_NOISE: u64 = 0x1003;
    pub const MOMENTUM_INIT: u64 = 0x1004;
    pub const LOCALIZATION: u64 = 0x1005;
    pub const INNER: u64 = 0x1006;
    pub const SEQUENTIAL: u64 = 0x1007;
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a label path into a single 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |acc, &label| mix64(acc ^ mix64(label)))
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Maps 64 random bits to a uniform value in `[-1, 1)`.
#[inline]
pub fn bits_to_symmetric_unit(bits: u64) -> f64 {
    // 53 high bits -> [0, 1)
    let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}
