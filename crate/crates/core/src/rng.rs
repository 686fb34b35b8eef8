//! Seed derivation.
//!
//! Every random stream is keyed by a master seed plus a tuple of labels
//! (task index, stream tag, ...). Streams never share state, so the values a
//! task receives do not depend on the order or the thread in which tasks are
//! generated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags for the synthetic generator and the solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Stream {
    SubspaceBasis = 1,
    Regressor = 2,
    Covariates = 3,
    Noise = 4,
    TaskShuffle = 5,
    RandomInit = 6,
    SweepCell = 7,
    AdaptTask = 8,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `master` with an ordered list of labels into a 64-bit key.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    labels.iter().fold(splitmix64(master), |acc, &l| {
        splitmix64(acc ^ splitmix64(l.wrapping_add(GOLDEN)))
    })
}

/// Independent generator for `(master, stream, index)`.
pub fn stream_rng(master: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[stream as u64, index]))
}
