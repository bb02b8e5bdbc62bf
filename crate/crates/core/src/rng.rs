//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose key
//! holds `seed` and `lane` side by side, positioned on stream `step` at a block offset reserved for
//! `unit`. The same (seed, lane, step, unit) always yields the same numbers,
//! whichever thread asks for them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

// Each unit gets 2^20 words (4 MiB of output) before running into the next.
const UNIT_SHIFT: u32 = 20;

pub fn stream(seed: u64, lane: u64, step: u64, unit: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&lane.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(step);
    rng.set_word_pos(u128::from(unit) << UNIT_SHIFT);
    rng
}
