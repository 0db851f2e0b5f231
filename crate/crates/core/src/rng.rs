//! Counter-addressed random streams.
//!
//! Every draw is addressed by `(seed, stream, counter, draw index)`: the seed
//! keys a ChaCha8 generator, the stream selects an independent ChaCha stream
//! and the counter positions the keystream at a fixed block reserved for it.
//! A pulse therefore sees the same numbers no matter which thread or chunk
//! processes it.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit words reserved per counter value. Generous; a pulse consumes a few dozen.
const WORDS_PER_COUNTER: u128 = 1 << 12;

pub(crate) mod streams {
    pub const EMISSION_BASE: u64 = 0x10;
    pub const BLINKING_BASE: u64 = 0x20;
    pub const ROUTING: u64 = 0x30;
    pub const DARK_BASE: u64 = 0x40;
}

pub(crate) fn keyed(seed: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(counter as u128 * WORDS_PER_COUNTER);
    rng
}

/// Uniform in the open interval (0, 1).
pub(crate) fn open01<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn exponential<R: RngCore>(rng: &mut R, mean: f64) -> f64 {
    -mean * open01(rng).ln()
}

pub(crate) fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    StandardNormal.sample(rng)
}
