//! Deterministic random substreams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator for replicate `stream` under master `seed`.
///
/// Streams are independent of thread scheduling, so parallel runs reproduce
/// sequential ones bit for bit.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed for an independent stage of a computation.
pub fn child_seed(seed: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(stage);
    rng.next_u64()
}
