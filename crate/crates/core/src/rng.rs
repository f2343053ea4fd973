//! Deterministic stream derivation.
//!
//! Every random decision in the crate draws from a ChaCha stream derived
//! from a base seed plus a fixed purpose tag and index words. Streams are
//! independent of evaluation order, so parallel fitness evaluation and
//! sequential evaluation see identical draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags. Each consumer mixes its own tag so that, e.g., the split
/// shuffle and the network init never share a stream even under seed reuse.
pub mod tag {
    pub const SPLIT: u64 = 0x5350_4C49;
    pub const SYNTH: u64 = 0x53_594E;
    pub const OPT_INIT: u64 = 0x4F49_4E49;
    pub const OPT_MOVE: u64 = 0x4F4D_4F56;
    pub const NET_INIT: u64 = 0x4E49_4E49;
    pub const NET_SHUFFLE: u64 = 0x4E53_4846;
    pub const SURROGATE: u64 = 0x5355_5252;
    pub const FS_SPLIT: u64 = 0x4653_5350;
    pub const FS_OPT: u64 = 0x4653_4F50;
    pub const PROBE: u64 = 0x50_5242;
    pub const TUNE: u64 = 0x54_554E;
    pub const RAND: u64 = 0x52_414E;
}

/// SplitMix64 finalizer; one round is enough to decorrelate tag words.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `words` into `seed`, one mix round per word.
pub fn derive(seed: u64, words: &[u64]) -> u64 {
    let mut acc = splitmix(seed);
    for &w in words {
        acc = splitmix(acc ^ splitmix(w));
    }
    acc
}

/// Seeded stream for (seed, words). Same inputs, same stream, always.
pub fn stream(seed: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, words))
}
