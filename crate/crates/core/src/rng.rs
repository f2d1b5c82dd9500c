//! Splittable random streams.
//!
//! Every (master seed, batch, purpose) triple maps to its own ChaCha8 stream,
//! so a batch draws the same numbers no matter which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Emission = 0,
    Thinning = 1,
    Detection = 2,
    Dark = 3,
    Blinking = 4,
}

const PURPOSES: u64 = 8;

pub fn stream(master: u64, batch: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(batch.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}

/// SplitMix64 finalizer; derives child seeds (for example one per sweep row).
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
