//! Seed derivation. Every random stream in the crate is a `ChaCha8Rng`
//! keyed by the global seed plus a documented offset (class id, sample id,
//! epoch), so runs replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `seed + offset` with wrap-around.
pub fn derive(seed: u64, offset: u64) -> u64 {
    seed.wrapping_add(offset)
}

/// Independent stream for a (seed, stream, index) triple, used where two
/// offsets would otherwise collide (e.g. epoch and batch).
pub fn stream(seed: u64, stream: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) << 16);
    rng
}
