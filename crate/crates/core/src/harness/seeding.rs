//! Per-purpose random streams.
//!
//! A run seed keys a ChaCha8 generator; each purpose reads its own stream
//! (ChaCha's 64-bit stream id), so changing how often one component draws
//! never shifts the numbers another component sees. Variants run with the
//! same seed therefore share environment resets, initial weights, and so on.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Env = 1,
    Init = 2,
    Replay = 3,
    Behavior = 4,
    Eval = 5,
    Reservoir = 6,
}

pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// Seed for network initialization.
pub fn init_seed(seed: u64) -> u64 {
    stream(seed, Stream::Init).next_u64()
}
