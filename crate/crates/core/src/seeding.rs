//! Deterministic seed derivation.
//!
//! Every stochastic component draws from a ChaCha8 stream seeded through
//! [`derive_seed`], a splitmix64 chain over (master, lane, draw). Derived
//! streams are independent of thread count and platform, which is what makes
//! scans and searches reproducible under any parallel schedule.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; bijective on u64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derive the seed for lane `a`, draw `b` of a master seed.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let x = splitmix64(master);
    let y = splitmix64(x ^ a.wrapping_mul(0xA24B_AED4_963E_E407));
    splitmix64(y ^ b.wrapping_mul(0x9FB2_1C65_1E98_DF25))
}

/// ChaCha8 stream for a derived seed.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
