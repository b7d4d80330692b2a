//! Random streams for simulation runs.
//!
//! Every run is driven by ChaCha8 keyed from a 64-bit seed. Parallel work is
//! split into fixed chunks, each on its own ChaCha stream, so results do not
//! depend on how many worker threads execute the chunks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identity of the generator behind every simulated number.
pub const GENERATOR: &str = "ChaCha8";

pub type SimRng = ChaCha8Rng;

/// Stream 0 of `seed`; used by sequential session chains.
pub fn seeded(seed: u64) -> SimRng {
    stream(seed, 0)
}

pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
