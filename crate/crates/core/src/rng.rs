//! Deterministic named random streams.
//!
//! Every random decision in the toolkit draws from a stream derived from
//! the master seed plus a purpose tag and index tuple (e.g. masking for
//! step 17, batch member 3). Streams are stateless to construct, so
//! checkpoint resume recreates randomness exactly without serializing RNG
//! state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::array::Array;
use crate::scalar::Scalar;

/// Stream purpose tags; combined with indices they name a unique stream.
pub mod tag {
    pub const INIT: u64 = 0x01;
    pub const MASK: u64 = 0x02;
    pub const GUMBEL: u64 = 0x03;
    pub const DROPOUT: u64 = 0x04;
    pub const BATCH: u64 = 0x05;
    pub const CORPUS: u64 = 0x06;
    pub const SPLIT: u64 = 0x07;
    pub const EVAL: u64 = 0x08;
    pub const PROBE: u64 = 0x09;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 stream keyed by `(seed, components...)`. Identical inputs give
/// an identical stream on every platform.
pub fn named_stream(seed: u64, components: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0xD6E8_FEB8_6659_FD93;
    let mut acc = splitmix64(&mut state);
    for &c in components {
        state ^= c.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
        acc ^= splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    let mut s = acc;
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Fills an array with uniform draws from `[lo, hi)`. Values are sampled
/// in f64 and converted, so f32 and f64 graphs see the same sequence.
pub fn uniform_array<F: Scalar>(
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    lo: f64,
    hi: f64,
) -> Array<F> {
    use rand::Rng;
    Array::from_fn(shape, |_| {
        F::from_f64(lo + (hi - lo) * rng.random::<f64>())
    })
}

/// Fills an array with N(0, std^2) draws.
pub fn normal_array<F: Scalar>(rng: &mut ChaCha8Rng, shape: Vec<usize>, std: f64) -> Array<F> {
    use rand_distr::{Distribution, StandardNormal};
    Array::from_fn(shape, |_| {
        let z: f64 = StandardNormal.sample(rng);
        F::from_f64(z * std)
    })
}
