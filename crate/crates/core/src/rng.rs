//! Seed derivation and per-replication random streams.
//!
//! Every replication of a study owns an independent ChaCha8 stream keyed by
//! `derive_seed(master, index)`, so results never depend on how replications
//! are distributed over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream ids used inside one realization.
pub(crate) const STREAM_GERMS: u64 = 0;
pub(crate) const STREAM_MARKS: u64 = 1;
pub(crate) const STREAM_THINNING: u64 = 2;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_mul(GOLDEN_GAMMA) ^ 0xA076_1D64_78BD_642F))
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
