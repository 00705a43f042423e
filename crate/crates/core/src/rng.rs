//! Seeded, splittable random streams.
//!
//! Every random decision draws from a ChaCha8 stream keyed by the user seed
//! and selected by `(purpose, index)`, so parallel chains are reproducible
//! regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Backward = 1,
    Forward = 2,
    Convergence = 3,
    KMeans = 4,
    Statistic = 5,
    Split = 6,
    Synthetic = 7,
    Calibration = 8,
}

pub fn stream_rng(seed: u64, purpose: Stream, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | index);
    rng
}

/// SplitMix64 finalizer, used to derive child seeds.
pub fn mix_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
