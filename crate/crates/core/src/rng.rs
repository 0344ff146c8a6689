//! Seeded randomness helpers.
//!
//! All stochastic parts of the simulator draw from [`ChaCha8Rng`] streams so
//! that a run is a pure function of its seed. Sub-streams (one render, one
//! tree, one episode) are derived with [`derive_stream`], which mixes the
//! parent seed with a stream index through SplitMix64; two different indices
//! never share a stream.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// SplitMix64 finalizer. Used only for seed derivation, never as a generator.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for a (seed, stream) pair.
pub fn derive_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream.wrapping_mul(0xa076_1d64_78bd_642f);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Root generator for a bare seed.
pub fn from_seed(seed: u64) -> ChaCha8Rng {
    derive_stream(seed, 0)
}

/// Uniform draw in `[0, 1)` with 53 bits of mantissa.
pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform_in(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}

/// Standard normal via Box-Muller. One draw per call; the sine twin is
/// discarded to keep the stream layout obvious.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = (uniform(rng)).max(f64::MIN_POSITIVE);
    let u2 = uniform(rng);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform integer in `[0, n)` by rejection; unbiased.
pub fn index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    assert!(n > 0, "index range must be non-empty");
    let n = n as u64;
    let zone = u64::MAX - (u64::MAX % n);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return (v % n) as usize;
        }
    }
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(rng: &mut ChaCha8Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = index(rng, i + 1);
        items.swap(i, j);
    }
}
