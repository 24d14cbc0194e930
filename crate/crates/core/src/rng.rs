//! Seeded random streams.
//!
//! Every generator in the crate is a ChaCha8 stream keyed by a 64-bit seed
//! (expanded with `seed_from_u64`) and a stream id, so independent consumers of
//! one seed never share samples and reruns are bit-identical on any platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_POOL: u64 = 1;
pub const STREAM_TRAVERSE: u64 = 2;
pub const STREAM_QUERY_PERTURBATION: u64 = 3;
pub const STREAM_NOISE: u64 = 4;

pub fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
