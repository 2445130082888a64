//! Seeded ChaCha8 substreams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for `(seed, stream)`; streams never overlap.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
