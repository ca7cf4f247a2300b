//! Seeded random streams. Every stochastic step in the crate draws from a
//! ChaCha8 generator keyed by the run seed and a fixed per-purpose stream id,
//! so adding randomness in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SPLIT: u64 = 1;
pub const BATCHES: u64 = 2;
pub const RESAMPLE: u64 = 3;
pub const INIT: u64 = 4;
pub const SKETCH: u64 = 5;
pub const SYNTH: u64 = 6;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
